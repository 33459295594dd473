#pragma once

#include <functional>
#include <string>
#include <vector>

#include "layerfusion/graph.hpp"
#include "layerfusion/params.hpp"

namespace layerfusion {

// Records a scalar loss on `g` from `params`. Must be deterministic.
using LossBuilder = std::function<Var(Graph& g, const ParamStore& params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_parameter;
};

// Compares reverse-mode gradients with central differences
// (f(x + eps) - f(x - eps)) / 2 eps over the named parameters. The error of a
// coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
// max_coords_per_param = 0 checks every coordinate; otherwise an evenly
// strided subset of that size is checked per tensor.
GradCheckResult grad_check(const ParamStore& params, const LossBuilder& build,
                           const std::vector<std::string>& names, double eps,
                           std::size_t max_coords_per_param = 0);

// Every parameter name in the store.
std::vector<std::string> all_names(const ParamStore& params);

}  // namespace layerfusion
