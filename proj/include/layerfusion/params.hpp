#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "layerfusion/tensor.hpp"

namespace layerfusion {

enum class InitScheme { GlorotUniform, Zeros, Ones };

std::string_view to_string(InitScheme scheme);

struct ParamSpec {
  std::string name;
  Shape shape;
  InitScheme scheme = InitScheme::GlorotUniform;
};

// Named trainable tensors, iterated in lexicographic name order.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : rng_seed_(seed) {}

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }

  std::size_t size() const { return entries_.size(); }
  // Total scalar count across all entries.
  std::size_t parameter_count() const;
  // Scalar count over entries whose name starts with `prefix`.
  std::size_t parameter_count(std::string_view prefix) const;

  std::uint64_t rng_seed() const { return rng_seed_; }
  void set_rng_seed(std::uint64_t seed) { rng_seed_ = seed; }

  bool operator==(const ParamStore& other) const = default;

 private:
  std::map<std::string, Tensor> entries_;
  std::uint64_t rng_seed_ = 0;
};

using Gradients = std::map<std::string, Tensor>;

// Glorot bound sqrt(6 / (fan_in + fan_out)); fan_in is the leading dimension,
// fan_out the trailing one (1 for vectors).
double glorot_bound(const Shape& shape);

// Deterministic in (specs, seed). Entries are drawn in spec order.
ParamStore init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);

}  // namespace layerfusion
