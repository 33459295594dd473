#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layerfusion/analysis.hpp"
#include "layerfusion/checkpoint.hpp"
#include "layerfusion/config.hpp"
#include "layerfusion/errors.hpp"
#include "layerfusion/runner.hpp"
#include "layerfusion/synthgen.hpp"

namespace fs = std::filesystem;
using namespace layerfusion;

namespace {

// Options every subcommand accepts, plus one flag per config key.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value run config");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--out-dir", out_dir, "directory for default outputs");
    for (const auto& key : config_keys())
      app->add_option("--" + key, overrides[key], "override config key " + key);
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : load_config(config);
    for (const auto& [key, value] : overrides)
      if (!value.empty()) set_config_value(cfg, key, value);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    validate_structure(cfg);
    return cfg;
  }
};

fs::path output_path(const std::string& out, const RunConfig& cfg, const std::string& fallback) {
  if (out.empty()) return fs::path(cfg.out_dir) / fallback;
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<FusionKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<FusionKind> kinds;
  for (const auto& n : names) {
    if (n == "all") {
      kinds.insert(kinds.end(), kAllFusionKinds.begin(), kAllFusionKinds.end());
      continue;
    }
    kinds.push_back(parse_fusion_kind(n));
  }
  return kinds;
}

const GroundingSample& find_sample(const Dataset& data, std::optional<std::uint64_t> id) {
  if (data.samples.empty()) throw InvalidArgument("dataset is empty");
  if (!id) return data.samples.front();
  for (const auto& s : data.samples)
    if (s.id == *id) return s;
  throw InvalidArgument("no sample with id " + std::to_string(*id));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-fusion grounding engine: synthetic data, training, evaluation and analysis"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  CommonOptions gen_common;
  gen_common.attach(gen);
  std::string gen_spec, gen_out;
  std::size_t gen_count = 0;
  std::uint64_t gen_start = 0;
  gen->add_option("--spec", gen_spec, "scene spec file (spec.* keys)");
  gen->add_option("--count", gen_count, "number of samples")->required();
  gen->add_option("--out", gen_out, "output JSONL path");
  gen->add_option("--start-index", gen_start, "id of the first sample");

  // train
  auto* train = app.add_subcommand("train", "train one model");
  CommonOptions train_common;
  train_common.attach(train);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonOptions eval_common;
  eval_common.attach(ev);
  std::string eval_ckpt, eval_data, eval_out;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--data", eval_data, "dataset file")->required();
  ev->add_option("--out", eval_out, "per-sample CSV path");

  // compare
  auto* cmp = app.add_subcommand("compare", "train and compare fusion kinds over seeds");
  CommonOptions cmp_common;
  cmp_common.attach(cmp);
  std::vector<std::string> cmp_kinds{"all"};
  std::vector<std::uint64_t> cmp_seeds{1, 2, 3, 4, 5};
  std::string cmp_out;
  cmp->add_option("--kinds", cmp_kinds, "comma-separated fusion kinds or 'all'")->delimiter(',');
  cmp->add_option("--seeds", cmp_seeds, "comma-separated seeds")->delimiter(',');
  cmp->add_option("--out", cmp_out, "comparison CSV path");

  // analyze
  auto* an = app.add_subcommand("analyze", "diagnostics on a trained checkpoint");
  an->require_subcommand(1);
  struct AnalyzeOptions {
    CommonOptions common;
    std::string checkpoint, data, out;
    std::optional<std::uint64_t> sample_id;
  };
  std::map<std::string, AnalyzeOptions> an_opts;
  std::optional<std::size_t> pca_layer;
  for (const std::string name : {"attention", "pca", "margin"}) {
    auto* sub = an->add_subcommand(name);
    auto& o = an_opts[name];
    o.common.attach(sub);
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
    sub->add_option("--data", o.data, "dataset file")->required();
    sub->add_option("--sample-id", o.sample_id, "sample to analyze");
    sub->add_option("--out", o.out, "CSV path");
    if (name == "pca") sub->add_option("--layer", pca_layer, "encoder layer to project (default: fused)");
  }

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  CommonOptions gc_common;
  gc_common.attach(gc);
  double gc_threshold = 1e-4;
  GradCheckConfig gc_cfg;
  gc->add_option("--threshold", gc_threshold, "maximum relative error");
  gc->add_option("--d", gc_cfg.d, "model width (<= 32)");
  gc->add_option("--layers", gc_cfg.layers, "encoder layers (<= 3)");
  gc->add_option("--heads", gc_cfg.heads, "attention heads");
  gc->add_option("--regions", gc_cfg.regions, "regions (<= 4)");
  gc->add_option("--tokens", gc_cfg.tokens, "tokens");
  gc->add_option("--epsilon", gc_cfg.epsilon, "finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const RunConfig cfg = gen_common.resolve();
      const SceneSpec spec = gen_spec.empty() ? SceneSpec{} : load_scene_spec(gen_spec);
      const fs::path out = output_path(gen_out, cfg, "dataset.jsonl");
      generate_dataset(spec, gen_count, cfg.seed, out, gen_start);
      std::cout << "wrote " << gen_count << " samples to " << out.string() << '\n';
    } else if (*train) {
      run_train(train_common.resolve(), std::cout);
    } else if (*ev) {
      const RunConfig cfg = eval_common.resolve();
      const fs::path out = output_path(eval_out, cfg, "eval.csv");
      const EvalResult r = run_eval(eval_ckpt, eval_data, out);
      std::cout << "iou05 " << format_double(r.iou05) << " over " << r.rows.size() << " samples; wrote "
                << out.string() << '\n';
    } else if (*cmp) {
      const RunConfig cfg = cmp_common.resolve();
      const CompareResult r = run_compare(cfg, parse_kinds(cmp_kinds), cmp_seeds, &std::cout);
      const fs::path out = output_path(cmp_out, cfg, "compare.csv");
      write_file(out, compare_csv(r));
      for (const auto& s : r.summary) {
        std::cout << to_string(s.kind) << ": val " << format_double(s.val_mean) << " +- " << format_double(s.val_std);
        if (s.has_test) std::cout << ", test " << format_double(s.test_mean) << " +- " << format_double(s.test_std);
        std::cout << ", extra params " << s.extra_params << '\n';
      }
      std::cout << "wrote " << out.string() << '\n';
    } else if (*an) {
      for (auto& [name, o] : an_opts) {
        if (!*an->get_subcommand(name)) continue;
        const RunConfig cfg = o.common.resolve();
        const Checkpoint ck = load_checkpoint(o.checkpoint);
        const Dataset data = load_dataset(o.data);
        check_compatible(ck.metadata, data.header);
        const ModelConfig& model = ck.metadata.model;
        fs::path out;
        if (name == "attention") {
          Dataset subset = data;
          if (o.sample_id) subset.samples = {find_sample(data, o.sample_id)};
          const auto profiles = attention_group_profile(ck.params, model, subset);
          out = output_path(o.out, cfg, "attention_profile.csv");
          write_file(out, profile_csv(profiles));
          std::cout << trend_observation(profiles);
        } else if (name == "pca") {
          const auto proj = pca_project_regions(ck.params, model, find_sample(data, o.sample_id), pca_layer);
          out = output_path(o.out, cfg, "projection.csv");
          write_file(out, projection_csv(proj));
          std::cout << "explained variance " << format_double(proj.explained_variance[0]) << ", "
                    << format_double(proj.explained_variance[1]) << '\n';
        } else {
          std::vector<MarginRow> rows;
          if (o.sample_id) rows.push_back(sample_margins(ck.params, model, find_sample(data, o.sample_id)));
          else rows = dataset_margins(ck.params, model, data);
          out = output_path(o.out, cfg, "margins.csv");
          write_file(out, margins_csv(rows));
          std::size_t wider = 0;
          for (const auto& r : rows) wider += r.margin_fused > r.margin_top ? 1 : 0;
          std::cout << "fused margin exceeds top-layer margin on " << wider << " of " << rows.size() << " samples\n";
        }
        std::cout << "wrote " << out.string() << '\n';
      }
    } else if (*gc) {
      const RunConfig cfg = gc_common.resolve();
      if (gc_common.seed) gc_cfg.seed = cfg.seed;
      const GradCheckReport report = run_gradcheck(gc_cfg);
      for (const auto& r : report.rows) {
        std::cout << r.component << " max_rel_error " << format_double(r.max_rel_error) << " coords "
                  << r.coordinates;
        if (!r.detail.empty()) std::cout << " (" << r.detail << ')';
        std::cout << (r.max_rel_error < gc_threshold ? " ok" : " FAIL") << '\n';
      }
      const bool ok = report.passed(gc_threshold);
      std::cout << "worst " << format_double(report.worst()) << " threshold " << format_double(gc_threshold)
                << (ok ? " PASS" : " FAIL") << '\n';
      if (!ok) {
        std::cerr << "layerfusion: gradient check exceeded threshold\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "layerfusion: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
