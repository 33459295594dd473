#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "layerfusion/params.hpp"

namespace layerfusion {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One bias-corrected Adam update of every parameter named in `grads`.
// Parameters absent from `grads` are left untouched.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg);

enum class LrSchedule { Constant, Cosine };
std::string_view to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(std::string_view name);

// Learning rate for 0-based update `step` of `total`: linear warmup over the
// first `warmup` updates, then constant or cosine decay to zero.
double scheduled_lr(double base, LrSchedule schedule, std::size_t step, std::size_t total, std::size_t warmup);

}  // namespace layerfusion
