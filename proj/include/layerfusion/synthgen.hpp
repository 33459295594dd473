#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layerfusion/rng.hpp"
#include "layerfusion/sample.hpp"

namespace layerfusion {

inline constexpr std::uint32_t kGrammarVersion = 1;

// Fixed word lists of the command grammar.
const std::vector<std::string>& grammar_categories();
const std::vector<std::string>& grammar_colors();
const std::vector<std::string>& grammar_ordinals();
const std::vector<std::string>& grammar_template_names();
// Vocabulary in token-id order.
const std::vector<std::string>& grammar_vocabulary();
std::size_t token_id(const std::string& word);

struct SceneSpec {
  std::size_t min_regions = 6;
  std::size_t max_regions = 12;
  std::vector<std::string> categories = grammar_categories();
  std::vector<std::string> colors = grammar_colors();
  // Minimum number of non-target regions sharing the target's category.
  std::size_t distractors = 2;
  double noise_sigma = 0.1;
  // Upper bound on the IoU of any two boxes in a scene.
  double max_pair_iou = 0.7;

  void validate() const;
  std::size_t feature_dim() const { return categories.size() + colors.size(); }
  bool operator==(const SceneSpec&) const = default;
};

enum class Position { Left, Middle, Right, Ahead };

Position position_of(const Box& box);

struct RegionAttributes {
  std::size_t category = 0;  // index into SceneSpec::categories
  std::size_t color = 0;     // index into SceneSpec::colors
  Position position = Position::Middle;

  bool operator==(const RegionAttributes&) const = default;
};

struct Scene {
  std::vector<RegionProposal> regions;
  std::vector<RegionAttributes> attributes;
  std::size_t target = 0;
};

// Conjunctive description of a region. The ordinal counts, left to right by
// box center, among regions matching the other stated attributes.
struct Predicate {
  std::size_t category = 0;
  std::optional<std::size_t> color;
  std::optional<Position> position;
  std::optional<std::size_t> ordinal;  // 1-based

  bool operator==(const Predicate&) const = default;
};

// Indices of regions satisfying `pred`, in ascending order.
std::vector<std::size_t> matching_regions(const Predicate& pred, const std::vector<RegionAttributes>& attributes,
                                          const std::vector<RegionProposal>& regions);

Scene generate_scene(const SceneSpec& spec, Rng& rng);

struct Command {
  std::vector<std::size_t> tokens;
  Predicate predicate;
  std::size_t template_index = 0;
};

// Picks a template whose predicate selects exactly `target`. Throws
// InvalidArgument if no template identifies it.
Command render_command(const SceneSpec& spec, const Scene& scene, std::size_t target, Rng& rng);

// Parses tokens back into a predicate over `spec`'s category and color indices.
Predicate parse_command(const SceneSpec& spec, const std::vector<std::size_t>& tokens);

// Category and color recovered as the arg-max of each one-hot feature block.
RegionAttributes decode_attributes(const SceneSpec& spec, const RegionProposal& region);

// One complete sample from its own seed.
GroundingSample generate_sample(const SceneSpec& spec, std::uint64_t id, std::uint64_t seed);

// Writes `count` samples with ids first_index..first_index+count-1; sample i
// uses derive_seed(seed, i), so disjoint id ranges give disjoint samples.
void generate_dataset(const SceneSpec& spec, std::size_t count, std::uint64_t seed,
                      const std::filesystem::path& path, std::uint64_t first_index = 0);

}  // namespace layerfusion
