#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerfusion/sample.hpp"
#include "layerfusion/synthgen.hpp"

namespace layerfusion {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// First line of a dataset file.
struct DatasetHeader {
  std::uint32_t format_version = kDatasetFormatVersion;
  std::uint32_t grammar_version = kGrammarVersion;
  std::vector<std::string> vocab;
  std::vector<std::string> templates;
  SceneSpec spec;
  std::uint64_t seed = 0;
  std::uint64_t first_index = 0;
  std::uint64_t count = 0;

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<GroundingSample> samples;
};

std::string header_line(const DatasetHeader& header);
std::string sample_line(const GroundingSample& sample);

// Writes the header and one line per sample, via a temporary file and rename.
void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<GroundingSample>& samples);

// Validates every sample; the first violation raises FormatError citing its
// 1-based line number.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace layerfusion
