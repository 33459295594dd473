#include "layerfusion/dataset.hpp"

#include <fstream>
#include <json.hpp>

#include "layerfusion/errors.hpp"

namespace layerfusion {
namespace {

using nlohmann::json;

json spec_to_json(const SceneSpec& s) {
  return {{"min_regions", s.min_regions}, {"max_regions", s.max_regions}, {"categories", s.categories},
          {"colors", s.colors},           {"distractors", s.distractors}, {"noise_sigma", s.noise_sigma},
          {"max_pair_iou", s.max_pair_iou}};
}

SceneSpec spec_from_json(const json& j) {
  SceneSpec s;
  s.min_regions = j.at("min_regions").get<std::size_t>();
  s.max_regions = j.at("max_regions").get<std::size_t>();
  s.categories = j.at("categories").get<std::vector<std::string>>();
  s.colors = j.at("colors").get<std::vector<std::string>>();
  s.distractors = j.at("distractors").get<std::size_t>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.max_pair_iou = j.at("max_pair_iou").get<double>();
  return s;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw FormatError("dataset line " + std::to_string(line) + ": " + what);
}

GroundingSample sample_from_json(const json& j, const DatasetHeader& h, std::size_t line) {
  GroundingSample s;
  s.id = j.at("id").get<std::uint64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.grammar_version = j.at("grammar_version").get<std::uint32_t>();
  if (s.grammar_version != h.grammar_version)
    fail(line, "grammar_version " + std::to_string(s.grammar_version) + " differs from header version " +
                   std::to_string(h.grammar_version));
  s.target_index = j.at("target_index").get<std::size_t>();
  s.tokens = j.at("tokens").get<std::vector<std::size_t>>();
  if (s.tokens.empty()) fail(line, "empty token sequence");
  for (auto t : s.tokens)
    if (t >= h.vocab.size())
      fail(line, "token id " + std::to_string(t) + " outside vocabulary of size " + std::to_string(h.vocab.size()));
  for (const auto& r : j.at("regions")) {
    const auto box = r.at("box").get<std::vector<double>>();
    if (box.size() != 4) fail(line, "box must have 4 coordinates");
    RegionProposal p{{box[0], box[1], box[2], box[3]}, r.at("features").get<std::vector<double>>()};
    if (!is_valid(p.box)) fail(line, "invalid box " + to_string(p.box));
    if (p.features.size() != h.spec.feature_dim())
      fail(line, "feature length " + std::to_string(p.features.size()) + ", expected " +
                     std::to_string(h.spec.feature_dim()));
    for (double v : p.features)
      if (!std::isfinite(v)) fail(line, "non-finite feature value");
    s.regions.push_back(std::move(p));
  }
  if (s.regions.empty()) fail(line, "sample has no regions");
  if (s.target_index >= s.regions.size())
    fail(line, "target_index " + std::to_string(s.target_index) + " out of range for " +
                   std::to_string(s.regions.size()) + " regions");
  return s;
}

}  // namespace

std::string header_line(const DatasetHeader& h) {
  json j = {{"format_version", h.format_version},
            {"grammar_version", h.grammar_version},
            {"vocab", h.vocab},
            {"templates", h.templates},
            {"spec", spec_to_json(h.spec)},
            {"seed", h.seed},
            {"first_index", h.first_index},
            {"count", h.count}};
  return j.dump();
}

std::string sample_line(const GroundingSample& s) {
  json regions = json::array();
  for (const auto& r : s.regions)
    regions.push_back({{"box", {r.box.x1, r.box.y1, r.box.x2, r.box.y2}}, {"features", r.features}});
  json j = {{"id", s.id},
            {"regions", std::move(regions)},
            {"tokens", s.tokens},
            {"target_index", s.target_index},
            {"grammar_version", s.grammar_version},
            {"seed", s.seed}};
  return j.dump();
}

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<GroundingSample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << header_line(header) << '\n';
    for (const auto& s : samples) out << sample_line(s) << '\n';
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset " + path.string() + " is empty");
  try {
    const json h = json::parse(line);
    ds.header.format_version = h.at("format_version").get<std::uint32_t>();
    if (ds.header.format_version != kDatasetFormatVersion)
      fail(1, "format_version " + std::to_string(ds.header.format_version) + " unsupported (loader supports " +
                  std::to_string(kDatasetFormatVersion) + ")");
    ds.header.grammar_version = h.at("grammar_version").get<std::uint32_t>();
    if (ds.header.grammar_version != kGrammarVersion)
      fail(1, "grammar_version " + std::to_string(ds.header.grammar_version) + " unsupported (loader supports " +
                  std::to_string(kGrammarVersion) + ")");
    ds.header.vocab = h.at("vocab").get<std::vector<std::string>>();
    ds.header.templates = h.at("templates").get<std::vector<std::string>>();
    ds.header.spec = spec_from_json(h.at("spec"));
    ds.header.seed = h.at("seed").get<std::uint64_t>();
    ds.header.first_index = h.at("first_index").get<std::uint64_t>();
    ds.header.count = h.at("count").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(1, std::string("malformed header: ") + e.what());
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.samples.push_back(sample_from_json(json::parse(line), ds.header, lineno));
    } catch (const json::exception& e) {
      fail(lineno, std::string("malformed record: ") + e.what());
    }
  }
  return ds;
}

}  // namespace layerfusion
