#include "layerfusion/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "layerfusion/errors.hpp"

namespace layerfusion {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw FormatError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "data.train",       "data.val",         "data.test",         "encoder.d",     "encoder.layers",
      "encoder.heads",    "encoder.ffn_mult", "encoder.max_tokens", "encoder.stream", "encoder.dual_split",
      "fusion.kind",      "fusion.routing_iterations", "optim.lr", "optim.beta1",   "optim.beta2",
      "optim.eps",        "optim.schedule",   "optim.warmup_steps", "train.epochs",     "train.batch_size",  "run.seed",      "run.out_dir"};
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  auto& e = cfg.model.encoder;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  try {
    if (key == "data.train") cfg.train_data = value;
    else if (key == "data.val") cfg.val_data = value;
    else if (key == "data.test") cfg.test_data = value;
    else if (key == "encoder.d") e.d = size();
    else if (key == "encoder.layers") e.layers = size();
    else if (key == "encoder.heads") e.heads = size();
    else if (key == "encoder.ffn_mult") e.ffn_mult = size();
    else if (key == "encoder.max_tokens") e.max_tokens = size();
    else if (key == "encoder.stream") e.stream = parse_stream_kind(value);
    else if (key == "encoder.dual_split") {
      std::size_t parts[3];
      std::string_view rest = value;
      for (int i = 0; i < 3; ++i) {
        const auto comma = rest.find(',');
        if ((i < 2) == (comma == std::string_view::npos))
          throw FormatError("config key 'encoder.dual_split' expects text,vision,cross");
        parts[i] = parse_number<std::size_t>(key, trim(rest.substr(0, comma)));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
      e.split = {parts[0], parts[1], parts[2]};
    } else if (key == "fusion.kind") cfg.model.fusion = parse_fusion_kind(value);
    else if (key == "fusion.routing_iterations") cfg.model.fusion_options.routing_iterations = size();
    else if (key == "optim.lr") cfg.optim.lr = real();
    else if (key == "optim.beta1") cfg.optim.beta1 = real();
    else if (key == "optim.beta2") cfg.optim.beta2 = real();
    else if (key == "optim.eps") cfg.optim.eps_hat = real();
    else if (key == "optim.schedule") cfg.schedule = parse_lr_schedule(value);
    else if (key == "optim.warmup_steps") cfg.warmup_steps = size();
    else if (key == "train.epochs") cfg.epochs = size();
    else if (key == "train.batch_size") cfg.batch_size = size();
    else if (key == "run.seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "run.out_dir") cfg.out_dir = value;
    else throw FormatError("unknown config key '" + std::string(key) + "'");
  } catch (const InvalidArgument& err) {
    throw FormatError("config key '" + std::string(key) + "': " + err.what());
  }
}

namespace {

template <typename Setter>
void parse_lines(std::string_view text, std::string_view what, Setter set) {
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const FormatError& err) {
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": " + err.what());
    }
  }
}

std::string read_file(const std::filesystem::path& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + std::string(what) + " " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    v = v.substr(comma + 1);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ",") + i;
  return s;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  parse_lines(text, "config", [&](std::string_view k, std::string_view v) { set_config_value(cfg, k, v); });
  validate_structure(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path, "config")); }

const std::vector<std::string>& scene_spec_keys() {
  static const std::vector<std::string> keys = {"spec.min_regions", "spec.max_regions", "spec.categories",
                                                "spec.colors",      "spec.distractors", "spec.noise_sigma",
                                                "spec.max_pair_iou"};
  return keys;
}

void set_scene_spec_value(SceneSpec& spec, std::string_view key, std::string_view value) {
  if (key == "spec.min_regions") spec.min_regions = parse_number<std::size_t>(key, value);
  else if (key == "spec.max_regions") spec.max_regions = parse_number<std::size_t>(key, value);
  else if (key == "spec.categories") spec.categories = split_list(value);
  else if (key == "spec.colors") spec.colors = split_list(value);
  else if (key == "spec.distractors") spec.distractors = parse_number<std::size_t>(key, value);
  else if (key == "spec.noise_sigma") spec.noise_sigma = parse_number<double>(key, value);
  else if (key == "spec.max_pair_iou") spec.max_pair_iou = parse_number<double>(key, value);
  else throw FormatError("unknown scene spec key '" + std::string(key) + "'");
}

SceneSpec parse_scene_spec(std::string_view text) {
  SceneSpec spec;
  parse_lines(text, "scene spec", [&](std::string_view k, std::string_view v) { set_scene_spec_value(spec, k, v); });
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("scene spec: ") + e.what());
  }
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) { return parse_scene_spec(read_file(path, "scene spec")); }

std::string to_text(const SceneSpec& spec) {
  std::ostringstream out;
  out << "spec.min_regions = " << spec.min_regions << '\n'
      << "spec.max_regions = " << spec.max_regions << '\n'
      << "spec.categories = " << join(spec.categories) << '\n'
      << "spec.colors = " << join(spec.colors) << '\n'
      << "spec.distractors = " << spec.distractors << '\n'
      << "spec.noise_sigma = " << fmt_double(spec.noise_sigma) << '\n'
      << "spec.max_pair_iou = " << fmt_double(spec.max_pair_iou) << '\n';
  return out.str();
}

std::string to_text(const RunConfig& cfg) {
  const auto& e = cfg.model.encoder;
  std::ostringstream out;
  out << "data.train = " << cfg.train_data << '\n'
      << "data.val = " << cfg.val_data << '\n'
      << "data.test = " << cfg.test_data << '\n'
      << "encoder.d = " << e.d << '\n'
      << "encoder.layers = " << e.layers << '\n'
      << "encoder.heads = " << e.heads << '\n'
      << "encoder.ffn_mult = " << e.ffn_mult << '\n'
      << "encoder.max_tokens = " << e.max_tokens << '\n'
      << "encoder.stream = " << to_string(e.stream) << '\n'
      << "encoder.dual_split = " << e.split.text << ',' << e.split.vision << ',' << e.split.cross << '\n'
      << "fusion.kind = " << to_string(cfg.model.fusion) << '\n'
      << "fusion.routing_iterations = " << cfg.model.fusion_options.routing_iterations << '\n'
      << "optim.lr = " << fmt_double(cfg.optim.lr) << '\n'
      << "optim.beta1 = " << fmt_double(cfg.optim.beta1) << '\n'
      << "optim.beta2 = " << fmt_double(cfg.optim.beta2) << '\n'
      << "optim.eps = " << fmt_double(cfg.optim.eps_hat) << '\n'
      << "optim.schedule = " << to_string(cfg.schedule) << '\n'
      << "optim.warmup_steps = " << cfg.warmup_steps << '\n'
      << "train.epochs = " << cfg.epochs << '\n'
      << "train.batch_size = " << cfg.batch_size << '\n'
      << "run.seed = " << cfg.seed << '\n'
      << "run.out_dir = " << cfg.out_dir << '\n';
  return out.str();
}

void validate_structure(const RunConfig& cfg) {
  EncoderConfig probe = cfg.model.encoder;
  // Dataset-derived sizes are unknown here; any positive value passes.
  if (probe.vocab_size == 0) probe.vocab_size = 1;
  if (probe.region_feature_dim == 0) probe.region_feature_dim = 1;
  try {
    probe.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (cfg.batch_size == 0) throw FormatError("config: train.batch_size must be positive");
  if (cfg.model.fusion_options.routing_iterations == 0)
    throw FormatError("config: fusion.routing_iterations must be positive");
  if (!(cfg.optim.lr > 0.0)) throw FormatError("config: optim.lr must be positive");
}

}  // namespace layerfusion
