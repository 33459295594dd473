#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "layerfusion/dataset.hpp"
#include "layerfusion/errors.hpp"
#include "layerfusion/synthgen.hpp"

using namespace layerfusion;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "layerfusion_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Test-side reading of a command: words are matched against the word lists
// by string, attributes are read straight off features and boxes.
struct Reading {
  std::string category, color, position;
  std::size_t ordinal = 0;
};

Reading read_command(const std::vector<std::string>& words) {
  static const std::set<std::string> cats(grammar_categories().begin(), grammar_categories().end());
  static const std::set<std::string> cols(grammar_colors().begin(), grammar_colors().end());
  Reading r;
  std::size_t cat_at = 0;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (cats.contains(words[i])) {
      r.category = words[i];
      cat_at = i;
    }
  if (cat_at > 0 && cols.contains(words[cat_at - 1])) r.color = words[cat_at - 1];
  for (std::size_t i = 0; i < cat_at; ++i)
    for (std::size_t k = 0; k < grammar_ordinals().size(); ++k)
      if (words[i] == grammar_ordinals()[k]) r.ordinal = k + 1;
  std::string tail;
  for (std::size_t i = cat_at + 1; i < words.size(); ++i) tail += (tail.empty() ? "" : " ") + words[i];
  r.position = tail;
  return r;
}

std::size_t argmax(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return static_cast<std::size_t>(std::max_element(v.begin() + from, v.begin() + to) - v.begin()) - from;
}

std::string position_phrase(const Box& b) {
  const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
  if (cy < 0.3) return "up ahead";
  if (cx < 1.0 / 3.0) return "on the left";
  if (cx > 2.0 / 3.0) return "on the right";
  return "in the middle";
}

std::vector<std::size_t> oracle_matches(const GroundingSample& s, const Reading& r, const SceneSpec& spec) {
  const std::size_t nc = spec.categories.size(), nf = spec.feature_dim();
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < s.regions.size(); ++i) {
    const auto& f = s.regions[i].features;
    if (spec.categories[argmax(f, 0, nc)] != r.category) continue;
    if (!r.color.empty() && spec.colors[argmax(f, nc, nf)] != r.color) continue;
    if (!r.position.empty() && position_phrase(s.regions[i].box) != r.position) continue;
    hits.push_back(i);
  }
  if (r.ordinal == 0) return hits;
  std::vector<std::size_t> sorted = hits;
  std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    return s.regions[a].box.x1 + s.regions[a].box.x2 < s.regions[b].box.x1 + s.regions[b].box.x2;
  });
  if (r.ordinal > sorted.size()) return {};
  return {sorted[r.ordinal - 1]};
}

std::vector<std::string> words_of(const GroundingSample& s, const std::vector<std::string>& vocab) {
  std::vector<std::string> w;
  for (auto t : s.tokens) w.push_back(vocab.at(t));
  return w;
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("scene spec validation") {
  SceneSpec s;
  CHECK_NOTHROW(s.validate());
  s.categories = {"car"};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SceneSpec{};
  s.colors = {"red", "mauve"};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SceneSpec{};
  s.distractors = 6;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SceneSpec{};
  s.min_regions = 13;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SceneSpec{};
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("grammar vocabulary is small, duplicate-free and covers every word list") {
  const auto& v = grammar_vocabulary();
  CHECK(v.size() <= 70);
  CHECK(std::set<std::string>(v.begin(), v.end()).size() == v.size());
  for (const auto* list : {&grammar_categories(), &grammar_colors(), &grammar_ordinals()})
    for (const auto& w : *list) CHECK(v[token_id(w)] == w);
  CHECK_THROWS_AS(token_id("spaceship"), InvalidArgument);
}

TEST_CASE("zero noise gives exact one-hot features") {
  SceneSpec spec;
  spec.noise_sigma = 0.0;
  Rng rng(3);
  const Scene scene = generate_scene(spec, rng);
  for (std::size_t i = 0; i < scene.regions.size(); ++i) {
    const auto& f = scene.regions[i].features;
    CHECK(f.size() == 14);
    CHECK(std::count(f.begin(), f.end(), 1.0) == 2);
    CHECK(std::count(f.begin(), f.end(), 0.0) == 12);
    CHECK(f[scene.attributes[i].category] == 1.0);
    CHECK(f[8 + scene.attributes[i].color] == 1.0);
  }
}

TEST_CASE("scenes respect region counts, overlap bound and distractors") {
  SceneSpec spec;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const Scene scene = generate_scene(spec, rng);
    const std::size_t n = scene.regions.size();
    CHECK(n >= 6);
    CHECK(n <= 12);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) CHECK(iou(scene.regions[i].box, scene.regions[j].box) <= 0.7);
    std::size_t same = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != scene.target && scene.attributes[i].category == scene.attributes[scene.target].category) ++same;
    CHECK(same >= 2);
  }
}

TEST_CASE("infeasible scene specs are rejected") {
  SceneSpec spec;
  spec.min_regions = spec.max_regions = 400;
  spec.max_pair_iou = 0.0;
  Rng rng(1);
  CHECK_THROWS_AS(generate_scene(spec, rng), InvalidArgument);
}

TEST_CASE("same seed gives the same scene and command") {
  SceneSpec spec;
  const GroundingSample a = generate_sample(spec, 4, 99), b = generate_sample(spec, 4, 99);
  CHECK(a == b);
  CHECK_FALSE(a == generate_sample(spec, 4, 100));
  Rng r1(5), r2(5);
  const Scene s1 = generate_scene(spec, r1), s2 = generate_scene(spec, r2);
  Rng c1(8), c2(8);
  CHECK(render_command(spec, s1, s1.target, c1).tokens == render_command(spec, s2, s2.target, c2).tokens);
}

TEST_CASE("single region scene needs no ordinal") {
  SceneSpec spec;
  Scene scene;
  scene.regions = {{{0.4, 0.5, 0.6, 0.7}, std::vector<double>(14, 0.0)}};
  scene.attributes = {{2, 1, position_of(scene.regions[0].box)}};
  Rng rng(1);
  const Command cmd = render_command(spec, scene, 0, rng);
  CHECK_FALSE(cmd.predicate.ordinal.has_value());
  CHECK(cmd.predicate.category == 2);
  CHECK_THROWS_AS(render_command(spec, scene, 1, rng), InvalidArgument);
}

TEST_CASE("every emitted command singles out its target under an independent reading") {
  SceneSpec spec;
  std::vector<std::size_t> template_use(6, 0);
  for (std::uint64_t id = 0; id < 2000; ++id) {
    const GroundingSample s = generate_sample(spec, id, derive_seed(17, id));
    const auto words = words_of(s, grammar_vocabulary());
    const Reading r = read_command(words);
    const auto hits = oracle_matches(s, r, spec);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0] == s.target_index);
    CHECK(parse_command(spec, s.tokens).category == argmax(s.regions[s.target_index].features, 0, 8));
    // Color is stated only when it rules out a same-category region, and
    // position only when the description is still ambiguous without it.
    Reading bare;
    bare.category = r.category;
    Reading colored = bare;
    colored.color = r.color;
    if (!r.color.empty()) CHECK(oracle_matches(s, colored, spec).size() < oracle_matches(s, bare, spec).size());
    if (!r.position.empty()) CHECK(oracle_matches(s, colored, spec).size() > 1);
    template_use[(r.ordinal ? 4 : 0) + (r.color.empty() ? 0 : 1) + (r.ordinal || r.position.empty() ? 0 : 2)]++;
  }
  // With two distractors the bare category never suffices; every other
  // template occurs.
  CHECK(template_use[0] == 0);
  for (std::size_t t = 1; t < 6; ++t) CHECK(template_use[t] > 0);
}

TEST_CASE("category alone does not identify the target") {
  // Frequency baseline: guess uniformly among regions of the named category.
  SceneSpec spec;
  double expected = 0.0;
  const std::size_t count = 2000;
  for (std::uint64_t id = 0; id < count; ++id) {
    const GroundingSample s = generate_sample(spec, id, derive_seed(23, id));
    const Reading r = read_command(words_of(s, grammar_vocabulary()));
    std::size_t pool = 0;
    for (const auto& reg : s.regions)
      if (spec.categories[argmax(reg.features, 0, 8)] == r.category) ++pool;
    REQUIRE(pool >= 3);
    expected += 1.0 / static_cast<double>(pool);
  }
  CHECK(expected / count <= 1.0 / 3.0);
}

TEST_CASE("dataset generation: count, regeneration, disjoint ranges") {
  SceneSpec spec;
  CHECK_THROWS_AS(generate_dataset(spec, 0, 1, temp_path("never.jsonl")), InvalidArgument);

  const auto a = temp_path("a.jsonl"), b = temp_path("b.jsonl"), c = temp_path("c.jsonl");
  generate_dataset(spec, 60, 7, a);
  generate_dataset(spec, 60, 7, b);
  CHECK(slurp(a) == slurp(b));
  generate_dataset(spec, 40, 7, c, 60);

  const Dataset da = load_dataset(a), dc = load_dataset(c);
  CHECK(da.samples.size() == 60);
  CHECK(da.header.count == 60);
  CHECK(da.header.vocab == grammar_vocabulary());
  CHECK(da.header.spec == spec);
  std::set<std::string> lines;
  for (const auto& s : da.samples) lines.insert(sample_line(s));
  for (const auto& s : dc.samples) CHECK_FALSE(lines.contains(sample_line(s)));
  CHECK(dc.samples.front().id == 60);

  // Sample i depends only on (seed, i), not on the range it was generated in.
  const auto d = temp_path("d.jsonl");
  generate_dataset(spec, 100, 7, d);
  const Dataset dd = load_dataset(d);
  for (std::size_t i = 0; i < 60; ++i) CHECK(dd.samples[i] == da.samples[i]);
  for (std::size_t i = 0; i < 40; ++i) CHECK(dd.samples[60 + i] == dc.samples[i]);
}

}  // TEST_SUITE
