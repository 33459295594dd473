#include "layerfusion/synthgen.hpp"

#include <algorithm>
#include <map>
#include <thread>

#include "layerfusion/dataset.hpp"
#include "layerfusion/errors.hpp"
#include "layerfusion/runner.hpp"

namespace layerfusion {
namespace {

using Words = std::vector<std::string>;

const std::vector<Words>& actions() {
  static const std::vector<Words> a = {
      {"stop", "next", "to"}, {"park", "behind"},       {"follow"},       {"pass"},
      {"pull", "up", "near"}, {"slow", "down", "for"},  {"turn", "toward"}, {"wait", "for"},
      {"get", "close", "to"}, {"overtake"},             {"drive", "past"},  {"yield", "to"},
      {"approach"},           {"keep", "distance", "from"}};
  return a;
}

const Words& position_words(Position p) {
  static const Words left{"on", "the", "left"}, middle{"in", "the", "middle"}, right{"on", "the", "right"},
      ahead{"up", "ahead"};
  switch (p) {
    case Position::Left: return left;
    case Position::Middle: return middle;
    case Position::Right: return right;
    case Position::Ahead: return ahead;
  }
  return middle;
}

constexpr Position kPositions[] = {Position::Left, Position::Middle, Position::Right, Position::Ahead};

constexpr double kMinBoxSide = 0.05;
constexpr double kMaxBoxSide = 0.25;
constexpr int kBoxAttempts = 500;
constexpr int kSceneAttempts = 50;

}  // namespace

const std::vector<std::string>& grammar_categories() {
  static const Words c{"car", "truck", "bus", "van", "motorcycle", "bicycle", "pedestrian", "barrier"};
  return c;
}

const std::vector<std::string>& grammar_colors() {
  static const Words c{"red", "blue", "white", "black", "green", "yellow"};
  return c;
}

const std::vector<std::string>& grammar_ordinals() {
  static const Words o{"first", "second", "third", "fourth", "fifth", "sixth"};
  return o;
}

const std::vector<std::string>& grammar_template_names() {
  static const Words t{"ACTION the CATEGORY",
                       "ACTION the COLOR CATEGORY",
                       "ACTION the CATEGORY POSITION",
                       "ACTION the COLOR CATEGORY POSITION",
                       "ACTION the ORDINAL CATEGORY",
                       "ACTION the ORDINAL COLOR CATEGORY"};
  return t;
}

const std::vector<std::string>& grammar_vocabulary() {
  static const Words vocab = [] {
    Words v;
    auto add = [&](const std::string& w) {
      if (std::find(v.begin(), v.end(), w) == v.end()) v.push_back(w);
    };
    add("please");
    for (const auto& a : actions())
      for (const auto& w : a) add(w);
    add("the");
    for (const auto& w : grammar_ordinals()) add(w);
    for (const auto& w : grammar_colors()) add(w);
    for (const auto& w : grammar_categories()) add(w);
    for (auto p : kPositions)
      for (const auto& w : position_words(p)) add(w);
    return v;
  }();
  return vocab;
}

std::size_t token_id(const std::string& word) {
  const auto& v = grammar_vocabulary();
  auto it = std::find(v.begin(), v.end(), word);
  if (it == v.end()) throw InvalidArgument("word '" + word + "' is not in the grammar vocabulary");
  return static_cast<std::size_t>(it - v.begin());
}

void SceneSpec::validate() const {
  if (categories.size() < 2) throw InvalidArgument("scene spec: need at least 2 categories");
  if (colors.size() < 2) throw InvalidArgument("scene spec: need at least 2 colors");
  for (const auto& c : categories)
    if (std::find(grammar_categories().begin(), grammar_categories().end(), c) == grammar_categories().end())
      throw InvalidArgument("scene spec: category '" + c + "' is not in the grammar");
  for (const auto& c : colors)
    if (std::find(grammar_colors().begin(), grammar_colors().end(), c) == grammar_colors().end())
      throw InvalidArgument("scene spec: color '" + c + "' is not in the grammar");
  if (min_regions == 0 || min_regions > max_regions) throw InvalidArgument("scene spec: invalid region count range");
  if (distractors >= min_regions)
    throw InvalidArgument("scene spec: distractor count must be below the minimum region count");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("scene spec: noise_sigma must be non-negative");
  if (!(max_pair_iou >= 0.0 && max_pair_iou <= 1.0)) throw InvalidArgument("scene spec: max_pair_iou outside [0, 1]");
}

Position position_of(const Box& box) {
  if (box.center_y() < 0.3) return Position::Ahead;
  if (box.center_x() < 1.0 / 3.0) return Position::Left;
  if (box.center_x() > 2.0 / 3.0) return Position::Right;
  return Position::Middle;
}

std::vector<std::size_t> matching_regions(const Predicate& pred, const std::vector<RegionAttributes>& attributes,
                                          const std::vector<RegionProposal>& regions) {
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    const auto& a = attributes[i];
    if (a.category != pred.category) continue;
    if (pred.color && a.color != *pred.color) continue;
    if (pred.position && a.position != *pred.position) continue;
    hits.push_back(i);
  }
  if (!pred.ordinal) return hits;
  std::stable_sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
    return regions[a].box.center_x() < regions[b].box.center_x();
  });
  if (*pred.ordinal == 0 || *pred.ordinal > hits.size()) return {};
  return {hits[*pred.ordinal - 1]};
}

Scene generate_scene(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t n = spec.min_regions + rng.below(spec.max_regions - spec.min_regions + 1);
  Scene scene;
  for (int attempt = 0; attempt < kSceneAttempts && scene.regions.size() < n; ++attempt) {
    scene.regions.clear();
    while (scene.regions.size() < n) {
      bool placed = false;
      for (int k = 0; k < kBoxAttempts && !placed; ++k) {
        const double w = rng.uniform(kMinBoxSide, kMaxBoxSide);
        const double h = rng.uniform(kMinBoxSide, kMaxBoxSide);
        const double x1 = rng.uniform(0.0, 1.0 - w);
        const double y1 = rng.uniform(0.0, 1.0 - h);
        const Box b{x1, y1, x1 + w, y1 + h};
        placed = std::all_of(scene.regions.begin(), scene.regions.end(),
                             [&](const RegionProposal& r) { return iou(r.box, b) <= spec.max_pair_iou; });
        if (placed) scene.regions.push_back({b, {}});
      }
      if (!placed) break;
    }
  }
  if (scene.regions.size() < n)
    throw InvalidArgument("scene spec infeasible: cannot place " + std::to_string(n) + " boxes with pairwise IoU <= " +
                          std::to_string(spec.max_pair_iou));

  const std::size_t target_category = rng.below(spec.categories.size());
  scene.target = rng.below(n);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i)
    if (i != scene.target) others.push_back(i);
  // Partial Fisher-Yates: the first `distractors` entries share the target category.
  for (std::size_t k = 0; k < spec.distractors; ++k) std::swap(others[k], others[k + rng.below(others.size() - k)]);

  scene.attributes.resize(n);
  for (std::size_t i = 0; i < n; ++i) scene.attributes[i].category = rng.below(spec.categories.size());
  scene.attributes[scene.target].category = target_category;
  for (std::size_t k = 0; k < spec.distractors; ++k) scene.attributes[others[k]].category = target_category;

  const std::size_t nc = spec.categories.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = scene.attributes[i];
    a.color = rng.below(spec.colors.size());
    a.position = position_of(scene.regions[i].box);
    auto& f = scene.regions[i].features;
    f.assign(spec.feature_dim(), 0.0);
    f[a.category] = 1.0;
    f[nc + a.color] = 1.0;
    if (spec.noise_sigma > 0.0)
      for (auto& v : f) v += spec.noise_sigma * rng.normal();
  }
  return scene;
}

Command render_command(const SceneSpec& spec, const Scene& scene, std::size_t target, Rng& rng) {
  if (target >= scene.regions.size()) throw InvalidArgument("render_command: target not in scene");
  const auto& a = scene.attributes[target];
  auto unique = [&](const Predicate& p) {
    const auto hits = matching_regions(p, scene.attributes, scene.regions);
    return hits.size() == 1 && hits[0] == target;
  };
  auto count = [&](const Predicate& p) { return matching_regions(p, scene.attributes, scene.regions).size(); };

  // Incremental description: start from the category and add color, then
  // position, only when the attribute rules out at least one distractor.
  Predicate pred{a.category, std::nullopt, std::nullopt, std::nullopt};
  std::size_t remaining = count(pred);
  for (int attr = 0; attr < 2 && remaining > 1; ++attr) {
    Predicate next = pred;
    if (attr == 0) next.color = a.color;
    else next.position = a.position;
    if (const std::size_t c = count(next); c < remaining) {
      pred = next;
      remaining = c;
    }
  }
  if (remaining > 1) {
    // Ordinals rank the category (and color, if chosen) left to right.
    pred.position.reset();
    std::vector<std::size_t> ordered = matching_regions(pred, scene.attributes, scene.regions);
    std::stable_sort(ordered.begin(), ordered.end(), [&](std::size_t x, std::size_t y) {
      return scene.regions[x].box.center_x() < scene.regions[y].box.center_x();
    });
    const auto rank = static_cast<std::size_t>(std::find(ordered.begin(), ordered.end(), target) - ordered.begin()) + 1;
    if (rank > grammar_ordinals().size())
      throw InvalidArgument("render_command: target ranks beyond the last ordinal word");
    pred.ordinal = rank;
  }
  if (!unique(pred)) throw InvalidArgument("render_command: no template identifies the target uniquely");
  const std::size_t tmpl = pred.ordinal ? (pred.color ? 5 : 4) : (pred.color ? 1 : 0) + (pred.position ? 2 : 0);

  Command cmd;
  cmd.template_index = tmpl;
  cmd.predicate = pred;
  auto say = [&](const std::string& w) { cmd.tokens.push_back(token_id(w)); };
  if (rng.uniform() < 0.25) say("please");
  for (const auto& w : actions()[rng.below(actions().size())]) say(w);
  say("the");
  if (pred.ordinal) say(grammar_ordinals()[*pred.ordinal - 1]);
  if (pred.color) say(spec.colors[*pred.color]);
  say(spec.categories[pred.category]);
  if (pred.position)
    for (const auto& w : position_words(*pred.position)) say(w);
  return cmd;
}

Predicate parse_command(const SceneSpec& spec, const std::vector<std::size_t>& tokens) {
  const auto& vocab = grammar_vocabulary();
  std::vector<std::string> words;
  for (auto t : tokens) words.push_back(vocab.at(t));
  auto index_in = [](const std::vector<std::string>& list, const std::string& w) -> std::optional<std::size_t> {
    auto it = std::find(list.begin(), list.end(), w);
    if (it == list.end()) return std::nullopt;
    return static_cast<std::size_t>(it - list.begin());
  };
  // The object phrase follows the last "the" that precedes the category word.
  std::optional<std::size_t> cat_pos;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (index_in(spec.categories, words[i])) cat_pos = i;
  if (!cat_pos) throw FormatError("command has no category word");
  Predicate p;
  p.category = *index_in(spec.categories, words[*cat_pos]);
  for (std::size_t i = *cat_pos; i-- > 0 && words[i] != "the";) {
    if (auto c = index_in(spec.colors, words[i])) p.color = *c;
    if (auto o = index_in(grammar_ordinals(), words[i])) p.ordinal = *o + 1;
  }
  std::vector<std::string> tail(words.begin() + static_cast<std::ptrdiff_t>(*cat_pos) + 1, words.end());
  for (auto pos : kPositions)
    if (tail == position_words(pos)) p.position = pos;
  return p;
}

RegionAttributes decode_attributes(const SceneSpec& spec, const RegionProposal& region) {
  const auto& f = region.features;
  const std::size_t nc = spec.categories.size();
  RegionAttributes a;
  a.category = static_cast<std::size_t>(std::max_element(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(nc)) - f.begin());
  a.color = static_cast<std::size_t>(std::max_element(f.begin() + static_cast<std::ptrdiff_t>(nc), f.end()) - f.begin()) - nc;
  a.position = position_of(region.box);
  return a;
}

GroundingSample generate_sample(const SceneSpec& spec, std::uint64_t id, std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    Scene scene = generate_scene(spec, rng);
    Command cmd;
    try {
      cmd = render_command(spec, scene, scene.target, rng);
    } catch (const InvalidArgument&) {
      continue;
    }
    GroundingSample s;
    s.id = id;
    s.regions = std::move(scene.regions);
    s.tokens = std::move(cmd.tokens);
    s.target_index = scene.target;
    s.grammar_version = kGrammarVersion;
    s.seed = seed;
    return s;
  }
  throw InvalidArgument("could not render a uniquely identifying command for sample " + std::to_string(id));
}

void generate_dataset(const SceneSpec& spec, std::size_t count, std::uint64_t seed, const std::filesystem::path& path,
                      std::uint64_t first_index) {
  if (count == 0) throw InvalidArgument("generate_dataset: count must be at least 1");
  spec.validate();
  std::vector<GroundingSample> samples(count);
  parallel_for(count, [&](std::size_t i) {
    const std::uint64_t id = first_index + i;
    samples[i] = generate_sample(spec, id, derive_seed(seed, id));
  });
  DatasetHeader header;
  header.vocab = grammar_vocabulary();
  header.templates = grammar_template_names();
  header.spec = spec;
  header.seed = seed;
  header.first_index = first_index;
  header.count = count;
  write_dataset(path, header, samples);
}

}  // namespace layerfusion
