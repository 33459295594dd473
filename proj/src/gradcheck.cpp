#include "layerfusion/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "layerfusion/errors.hpp"

namespace layerfusion {
namespace {

double evaluate(const ParamStore& params, const LossBuilder& build) {
  Graph g;
  const Var loss = build(g, params);
  const Tensor& v = g.value(loss);
  if (v.size() != 1) throw ShapeError("grad_check: loss must be a scalar");
  return v[0];
}

std::vector<std::size_t> pick_coordinates(std::size_t size, std::size_t limit) {
  std::vector<std::size_t> idx;
  if (limit == 0 || size <= limit) {
    idx.resize(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t k = 0; k < limit; ++k) idx.push_back(k * size / limit + (size / limit) / 2);
  return idx;
}

}  // namespace

std::vector<std::string> all_names(const ParamStore& params) {
  std::vector<std::string> names;
  for (const auto& [name, t] : params.entries()) names.push_back(name);
  return names;
}

GradCheckResult grad_check(const ParamStore& params, const LossBuilder& build,
                           const std::vector<std::string>& names, double eps,
                           std::size_t max_coords_per_param) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw InvalidArgument("grad_check: epsilon must lie in [1e-7, 1e-3]");

  Gradients analytic;
  double base;
  {
    Graph g;
    const Var loss = build(g, params);
    base = g.value(loss)[0];
    analytic = g.backward(loss);
  }
  if (std::bit_cast<std::uint64_t>(evaluate(params, build)) != std::bit_cast<std::uint64_t>(base))
    throw DeterminismError("grad_check: forward pass is not deterministic");

  GradCheckResult result;
  ParamStore probe = params;
  for (const auto& name : names) {
    Tensor& p = probe.at(name);
    auto it = analytic.find(name);
    for (std::size_t i : pick_coordinates(p.size(), max_coords_per_param)) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = evaluate(probe, build);
      p[i] = saved - eps;
      const double down = evaluate(probe, build);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (++result.coordinates == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = name;
      }
    }
  }
  return result;
}

}  // namespace layerfusion
