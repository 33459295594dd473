#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "layerfusion/model.hpp"
#include "layerfusion/optim.hpp"
#include "layerfusion/synthgen.hpp"

namespace layerfusion {

struct RunConfig {
  std::string train_data;
  std::string val_data;
  std::string test_data;
  ModelConfig model;
  AdamConfig optim;
  LrSchedule schedule = LrSchedule::Constant;
  std::size_t warmup_steps = 0;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
};

// Every recognised key, e.g. "encoder.d" or "optim.lr".
const std::vector<std::string>& config_keys();

// Sets one key; throws FormatError on unknown keys or unparsable values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Flat "section.key = value" lines; '#' starts a comment.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string to_text(const RunConfig& cfg);

// Scene spec files use the same line format with "spec." keys; list values
// are comma separated.
const std::vector<std::string>& scene_spec_keys();
void set_scene_spec_value(SceneSpec& spec, std::string_view key, std::string_view value);
SceneSpec parse_scene_spec(std::string_view text);
SceneSpec load_scene_spec(const std::filesystem::path& path);
std::string to_text(const SceneSpec& spec);

// Checks encoder invariants that do not depend on a dataset.
void validate_structure(const RunConfig& cfg);

}  // namespace layerfusion
