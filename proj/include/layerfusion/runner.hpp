#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "layerfusion/checkpoint.hpp"
#include "layerfusion/config.hpp"
#include "layerfusion/dataset.hpp"
#include "layerfusion/model.hpp"

namespace layerfusion {

// Worker count from the THREADS environment variable; 1 when unset.
std::size_t thread_count();

// Runs body(i) for i in [0, n) over thread_count() workers. Each index is
// visited exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Fills dataset-derived encoder sizes and checks compatibility.
ModelConfig resolve_model(const RunConfig& cfg, const DatasetHeader& header);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_iou05 = 0.0;
};

struct TrainResult {
  ModelConfig model;
  ParamStore params;
  std::vector<EpochMetrics> history;
  std::uint64_t steps = 0;
};

// Epoch 0 reports the mean loss and validation accuracy at initialization;
// epoch e > 0 reports the mean online training loss over that epoch.
TrainResult train_model(const RunConfig& cfg, const Dataset& train, const Dataset& val, std::ostream* log = nullptr);

std::string metrics_csv(const std::vector<EpochMetrics>& history);

struct EvalRow {
  std::uint64_t id = 0;
  std::size_t predicted_index = 0;
  Box predicted_box;
  double iou = 0.0;
  bool correct = false;
};

struct EvalResult {
  double iou05 = 0.0;
  std::vector<EvalRow> rows;
};

EvalResult evaluate(const ParamStore& params, const ModelConfig& model, const Dataset& data);
std::string eval_csv(const EvalResult& result);

// Throws InvalidArgument naming both sides when checkpoint and dataset disagree.
void check_compatible(const CheckpointMetadata& meta, const DatasetHeader& header);

// train subcommand: writes checkpoint.lfck and metrics.csv under cfg.out_dir.
TrainResult run_train(const RunConfig& cfg, std::ostream& log);

// eval subcommand: writes the per-sample CSV to out and returns the result.
EvalResult run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                    const std::filesystem::path& out);

struct CompareRow {
  FusionKind kind = FusionKind::RSD;
  std::uint64_t seed = 0;
  double val_iou05 = 0.0;
  double test_iou05 = 0.0;
  bool has_test = false;
  std::size_t extra_params = 0;
};

struct CompareSummary {
  FusionKind kind = FusionKind::RSD;
  double val_mean = 0.0, val_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
  bool has_test = false;
  std::size_t extra_params = 0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<CompareSummary> summary;
};

// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v);

CompareResult summarize(std::vector<CompareRow> rows);

// Trains every (kind, seed) pair on the shared base config. Sub-runs fan out
// over thread_count() workers; rows come back in (kind, seed) order.
CompareResult run_compare(const RunConfig& base, const std::vector<FusionKind>& kinds,
                          const std::vector<std::uint64_t>& seeds, std::ostream* log = nullptr);
std::string compare_csv(const CompareResult& result);

struct GradCheckConfig {
  std::size_t d = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t regions = 3;
  std::size_t tokens = 5;
  DualSplit dual_split{1, 0, 1};
  double epsilon = 1e-5;
  std::uint64_t seed = 7;
  // Per-tensor coordinate cap; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;

  // Throws InvalidArgument unless d <= 32, layers <= 3 and regions <= 4.
  void validate() const;
};

struct GradCheckRow {
  std::string component;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string detail;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double worst() const;
  bool passed(double threshold) const { return worst() < threshold; }
};

// Finite-difference checks of every graph op, the scoring head, the encoder
// in both streams and every fusion kind end to end in both streams.
GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

// Random sample with the given sizes, for checks that need no generator.
GroundingSample random_sample(std::size_t regions, std::size_t tokens, std::size_t vocab, std::size_t feature_dim,
                              std::uint64_t seed);

std::string format_double(double v);

}  // namespace layerfusion
