#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "layerfusion/dataset.hpp"
#include "layerfusion/model.hpp"

namespace layerfusion {

enum class IouGroup { Overlapping, Disjoint };  // IoU > 0, IoU = 0
std::string_view to_string(IouGroup group);

struct AttentionProfile {
  IouGroup group = IouGroup::Overlapping;
  std::vector<double> mean_weight_per_layer;  // [L+1]; all zero when region_count is 0
  std::size_t region_count = 0;
};

// Averages each region's layer-weight row within its IoU group over the
// whole dataset. DynamicCombination raises UnsupportedOp.
std::array<AttentionProfile, 2> attention_group_profile(const ParamStore& params, const ModelConfig& model,
                                                        const Dataset& data);
std::string profile_csv(const std::array<AttentionProfile, 2>& profiles);

struct LayerTrend {
  double expected_layer = 0.0;       // sum_l l * w_l
  double uniform_expected_layer = 0.0;
  double upper_half_share = 0.0;     // mass on layers l > L/2
};
LayerTrend layer_trend(const AttentionProfile& profile);
// Human-readable summary of where the weight mass sits, per group.
std::string trend_observation(const std::array<AttentionProfile, 2>& profiles);

enum class IouBand { GroundTruth, Overlap, High, Disjoint };
std::string_view to_string(IouBand band);
// gt for the target itself; otherwise high above 0.5, overlap in (0, 0.5],
// disjoint at 0.
IouBand iou_band(double iou, bool is_target);

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Tensor vectors;              // column k pairs with values[k]
};
// Cyclic Jacobi rotations on a symmetric matrix.
SymmetricEigen jacobi_eigen(const Tensor& symmetric, double tolerance = 1e-12, std::size_t max_sweeps = 100);

struct ProjectedPoint {
  std::size_t region_id = 0;
  double x = 0.0;
  double y = 0.0;
  IouBand band = IouBand::Disjoint;
};

struct Projection2D {
  std::vector<ProjectedPoint> points;
  std::array<double, 2> explained_variance{0.0, 0.0};
  Tensor components;  // [d, 2]
};

// Centers rows of reps [n, d] and projects onto the top two principal axes.
// Each axis is signed so its first nonzero loading is positive. n >= 3.
Projection2D pca_project(const Tensor& reps, const std::vector<IouBand>& bands);

// source: an encoder layer index, or the fused representation when empty.
Projection2D pca_project_regions(const ParamStore& params, const ModelConfig& model, const GroundingSample& sample,
                                 std::optional<std::size_t> layer = std::nullopt);
std::string projection_csv(const Projection2D& projection);

// Euclidean distance from row gt to its nearest other row. n >= 2.
double nearest_neighbor_margin(const Tensor& reps, std::size_t gt);

struct MarginRow {
  std::uint64_t sample_id = 0;
  double margin_top = 0.0;
  double margin_fused = 0.0;
};
MarginRow sample_margins(const ParamStore& params, const ModelConfig& model, const GroundingSample& sample);
std::vector<MarginRow> dataset_margins(const ParamStore& params, const ModelConfig& model, const Dataset& data);
std::string margins_csv(const std::vector<MarginRow>& rows);

}  // namespace layerfusion
