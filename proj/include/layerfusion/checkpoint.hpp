#pragma once

#include <cstdint>
#include <filesystem>

#include "layerfusion/model.hpp"
#include "layerfusion/params.hpp"

namespace layerfusion {

inline constexpr char kCheckpointMagic[4] = {'L', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMetadata {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint32_t grammar_version = 0;

  bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
  CheckpointMetadata metadata;
  ParamStore params;
};

// Layout, all integers little-endian:
//   "LFCK" | u32 version | u64 metadata length | metadata JSON (UTF-8)
//   | u64 entry count | entries in lexicographic name order, each
//   u32 name length | name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
// Written to a temporary file and renamed into place.
void save_checkpoint(const ParamStore& params, const CheckpointMetadata& metadata, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace layerfusion
