#include "layerfusion/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "layerfusion/errors.hpp"

namespace layerfusion {

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (params.at(name).shape() != g.shape())
      throw ShapeError("adam_step: gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                       ", parameter has " + shape_string(params.at(name).shape()));
    for (auto* moments : {&state.m, &state.v}) {
      auto it = moments->find(name);
      if (it == moments->end())
        moments->emplace(name, Tensor(g.shape()));
      else if (it->second.shape() != g.shape())
        throw ShapeError("adam_step: optimizer state for '" + name + "' does not match its parameter");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_hat);
    }
  }
}

std::string_view to_string(LrSchedule schedule) { return schedule == LrSchedule::Constant ? "constant" : "cosine"; }

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "constant") return LrSchedule::Constant;
  if (name == "cosine") return LrSchedule::Cosine;
  throw InvalidArgument("unknown learning-rate schedule '" + std::string(name) + "' (expected constant or cosine)");
}

double scheduled_lr(double base, LrSchedule schedule, std::size_t step, std::size_t total, std::size_t warmup) {
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (schedule == LrSchedule::Constant || total <= warmup) return base;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

}  // namespace layerfusion
