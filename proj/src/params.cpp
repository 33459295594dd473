#include "layerfusion/params.hpp"

#include <cmath>
#include <set>

#include "layerfusion/errors.hpp"
#include "layerfusion/rng.hpp"

namespace layerfusion {

std::string_view to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::GlorotUniform: return "glorot-uniform";
    case InitScheme::Zeros: return "zeros";
    case InitScheme::Ones: return "ones";
  }
  return "?";
}

void ParamStore::add(const std::string& name, Tensor value) {
  if (!entries_.emplace(name, std::move(value)).second)
    throw InvalidArgument("duplicate parameter name '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const { return parameter_count(""); }

std::size_t ParamStore::parameter_count(std::string_view prefix) const {
  std::size_t total = 0;
  for (const auto& [name, t] : entries_)
    if (std::string_view(name).starts_with(prefix)) total += t.size();
  return total;
}

double glorot_bound(const Shape& shape) {
  const double fan_in = static_cast<double>(shape.front());
  const double fan_out = shape.size() > 1 ? static_cast<double>(shape.back()) : 1.0;
  return std::sqrt(6.0 / (fan_in + fan_out));
}

ParamStore init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  std::set<std::string> seen;
  for (const auto& s : specs)
    if (!seen.insert(s.name).second) throw InvalidArgument("duplicate parameter name '" + s.name + "'");

  ParamStore store(seed);
  Rng rng(seed);
  for (const auto& spec : specs) {
    Tensor t(spec.shape);
    switch (spec.scheme) {
      case InitScheme::Zeros: break;
      case InitScheme::Ones: t.fill(1.0); break;
      case InitScheme::GlorotUniform: {
        const double bound = glorot_bound(spec.shape);
        for (auto& v : t.data()) v = rng.uniform(-bound, bound);
        break;
      }
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

}  // namespace layerfusion
