#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "layerfusion/geometry.hpp"

namespace layerfusion {

struct RegionProposal {
  Box box;
  std::vector<double> features;

  bool operator==(const RegionProposal&) const = default;
};

// One scene paired with a tokenized command and its referred region.
struct GroundingSample {
  std::uint64_t id = 0;
  std::vector<RegionProposal> regions;
  std::vector<std::size_t> tokens;
  std::size_t target_index = 0;
  std::uint32_t grammar_version = 0;
  std::uint64_t seed = 0;

  const Box& target_box() const { return regions.at(target_index).box; }

  bool operator==(const GroundingSample&) const = default;
};

}  // namespace layerfusion
