#include "layerfusion/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "layerfusion/errors.hpp"
#include "layerfusion/geometry.hpp"
#include "layerfusion/runner.hpp"

namespace layerfusion {

std::string_view to_string(IouGroup group) { return group == IouGroup::Overlapping ? "iou>0" : "iou=0"; }

std::string_view to_string(IouBand band) {
  switch (band) {
    case IouBand::GroundTruth: return "gt";
    case IouBand::Overlap: return "overlap";
    case IouBand::High: return "high";
    case IouBand::Disjoint: return "disjoint";
  }
  return "?";
}

IouBand iou_band(double iou, bool is_target) {
  if (is_target) return IouBand::GroundTruth;
  if (iou > 0.5) return IouBand::High;
  if (iou > 0.0) return IouBand::Overlap;
  return IouBand::Disjoint;
}

std::array<AttentionProfile, 2> attention_group_profile(const ParamStore& params, const ModelConfig& model,
                                                        const Dataset& data) {
  if (model.fusion == FusionKind::DynamicCombination)
    throw UnsupportedOp("attention profile: DynamicCombination produces no layer weights");
  const std::size_t width = model.encoder.layers + 1;

  struct Partial {
    std::array<std::vector<double>, 2> sums;
    std::array<std::size_t, 2> counts{0, 0};
  };
  std::vector<Partial> partials(data.samples.size());
  parallel_for(data.samples.size(), [&](std::size_t i) {
    const auto& s = data.samples[i];
    const LayerStack stack = encode(s, model.encoder, params);
    const Tensor w = layer_weight_rows(stack, model.fusion, params, model.fusion_options);
    Partial& p = partials[i];
    p.sums = {std::vector<double>(width, 0.0), std::vector<double>(width, 0.0)};
    const Box& target = s.target_box();
    for (std::size_t r = 0; r < s.regions.size(); ++r) {
      const std::size_t g = iou(s.regions[r].box, target) > 0.0 ? 0 : 1;
      ++p.counts[g];
      for (std::size_t l = 0; l < width; ++l) p.sums[g][l] += w.at(r, l);
    }
  });

  std::array<AttentionProfile, 2> out{AttentionProfile{IouGroup::Overlapping, std::vector<double>(width, 0.0), 0},
                                      AttentionProfile{IouGroup::Disjoint, std::vector<double>(width, 0.0), 0}};
  for (const auto& p : partials)
    for (std::size_t g = 0; g < 2; ++g) {
      out[g].region_count += p.counts[g];
      for (std::size_t l = 0; l < width; ++l) out[g].mean_weight_per_layer[l] += p.sums[g][l];
    }
  for (auto& prof : out)
    if (prof.region_count > 0)
      for (auto& v : prof.mean_weight_per_layer) v /= static_cast<double>(prof.region_count);
  return out;
}

std::string profile_csv(const std::array<AttentionProfile, 2>& profiles) {
  std::string s = "group,layer,mean_weight,count\n";
  for (const auto& p : profiles)
    for (std::size_t l = 0; l < p.mean_weight_per_layer.size(); ++l)
      s += std::string(to_string(p.group)) + ',' + std::to_string(l) + ',' + format_double(p.mean_weight_per_layer[l]) +
           ',' + std::to_string(p.region_count) + '\n';
  return s;
}

LayerTrend layer_trend(const AttentionProfile& profile) {
  LayerTrend t;
  const auto& w = profile.mean_weight_per_layer;
  if (w.empty()) return t;
  const std::size_t top = w.size() - 1;
  t.uniform_expected_layer = static_cast<double>(top) / 2.0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    t.expected_layer += static_cast<double>(l) * w[l];
    if (2 * l > top) t.upper_half_share += w[l];
  }
  return t;
}

std::string trend_observation(const std::array<AttentionProfile, 2>& profiles) {
  std::ostringstream os;
  for (const auto& p : profiles) {
    os << to_string(p.group) << " (" << p.region_count << " regions): ";
    if (p.region_count == 0) {
      os << "empty\n";
      continue;
    }
    const LayerTrend t = layer_trend(p);
    os << "expected layer " << format_double(t.expected_layer) << " vs uniform "
       << format_double(t.uniform_expected_layer) << ", upper-half share " << format_double(t.upper_half_share) << "; "
       << (t.expected_layer > t.uniform_expected_layer ? "mass leans to higher layers" : "mass leans to lower layers")
       << '\n';
  }
  const LayerTrend a = layer_trend(profiles[0]), b = layer_trend(profiles[1]);
  if (profiles[0].region_count > 0 && profiles[1].region_count > 0)
    os << "iou>0 regions " << (a.expected_layer < b.expected_layer ? "shift toward lower" : "do not shift toward lower")
       << " layers relative to iou=0 regions\n";
  return os.str();
}

SymmetricEigen jacobi_eigen(const Tensor& symmetric, double tolerance, std::size_t max_sweeps) {
  if (symmetric.rank() != 2 || symmetric.rows() != symmetric.cols())
    throw ShapeError("jacobi_eigen needs a square matrix");
  const std::size_t n = symmetric.rows();
  Tensor a = symmetric;
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  double scale = 0.0;
  for (double x : a.data()) scale += x * x;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (off <= tolerance * tolerance * scale || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a.at(i, i) > a.at(j, j); });
  SymmetricEigen out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a.at(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors.at(r, k) = v.at(r, order[k]);
  }
  return out;
}

Projection2D pca_project(const Tensor& reps, const std::vector<IouBand>& bands) {
  if (reps.rank() != 2) throw ShapeError("pca_project expects [n, d] representations");
  const std::size_t n = reps.rows(), d = reps.cols();
  if (n < 3) throw InvalidArgument("pca_project needs at least 3 regions, got " + std::to_string(n));
  if (bands.size() != n) throw InvalidArgument("pca_project: one band per region required");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += reps.at(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  Tensor centered({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered.at(i, j) = reps.at(i, j) - mean[j];

  Tensor cov({d, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = centered.row(i);
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p; q < d; ++q) cov.at(p, q) += row[p] * row[q];
  }
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = p; q < d; ++q) {
      cov.at(p, q) /= static_cast<double>(n);
      cov.at(q, p) = cov.at(p, q);
    }

  const SymmetricEigen eig = jacobi_eigen(cov);
  double total = 0.0;
  for (double v : eig.values) total += std::max(v, 0.0);

  Projection2D out;
  out.components = Tensor({d, 2});
  for (std::size_t k = 0; k < 2 && k < d; ++k) {
    double sign = 1.0;
    for (std::size_t j = 0; j < d; ++j)
      if (std::abs(eig.vectors.at(j, k)) > 1e-12) {
        sign = eig.vectors.at(j, k) > 0.0 ? 1.0 : -1.0;
        break;
      }
    for (std::size_t j = 0; j < d; ++j) out.components.at(j, k) = sign * eig.vectors.at(j, k);
    out.explained_variance[k] = total > 0.0 ? std::max(eig.values[k], 0.0) / total : 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    ProjectedPoint p{i, 0.0, 0.0, bands[i]};
    for (std::size_t j = 0; j < d; ++j) {
      p.x += centered.at(i, j) * out.components.at(j, 0);
      p.y += centered.at(i, j) * out.components.at(j, 1);
    }
    out.points.push_back(p);
  }
  return out;
}

namespace {

std::vector<IouBand> sample_bands(const GroundingSample& s) {
  std::vector<IouBand> bands;
  for (std::size_t r = 0; r < s.regions.size(); ++r)
    bands.push_back(iou_band(iou(s.regions[r].box, s.target_box()), r == s.target_index));
  return bands;
}

}  // namespace

Projection2D pca_project_regions(const ParamStore& params, const ModelConfig& model, const GroundingSample& sample,
                                 std::optional<std::size_t> layer) {
  const Prediction p = predict(params, model, sample);
  if (!layer) return pca_project(p.fused, sample_bands(sample));
  if (*layer >= p.stack.layer_count())
    throw InvalidArgument("layer " + std::to_string(*layer) + " out of range 0.." +
                          std::to_string(p.stack.layer_count() - 1));
  return pca_project(p.stack.regions_at(*layer), sample_bands(sample));
}

std::string projection_csv(const Projection2D& projection) {
  std::string s = "region_id,x,y,iou_band\n";
  for (const auto& p : projection.points)
    s += std::to_string(p.region_id) + ',' + format_double(p.x) + ',' + format_double(p.y) + ',' +
         std::string(to_string(p.band)) + '\n';
  return s;
}

double nearest_neighbor_margin(const Tensor& reps, std::size_t gt) {
  if (reps.rank() != 2) throw ShapeError("nearest_neighbor_margin expects [n, d] representations");
  const std::size_t n = reps.rows();
  if (n < 2) throw InvalidArgument("nearest_neighbor_margin needs at least 2 regions");
  if (gt >= n) throw InvalidArgument("ground-truth index out of range");
  double best = std::numeric_limits<double>::infinity();
  const auto g = reps.row(gt);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == gt) continue;
    const auto r = reps.row(i);
    double d2 = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) d2 += (g[j] - r[j]) * (g[j] - r[j]);
    best = std::min(best, std::sqrt(d2));
  }
  return best;
}

MarginRow sample_margins(const ParamStore& params, const ModelConfig& model, const GroundingSample& sample) {
  const Prediction p = predict(params, model, sample);
  return {sample.id, nearest_neighbor_margin(p.stack.regions_at(p.stack.layer_count() - 1), sample.target_index),
          nearest_neighbor_margin(p.fused, sample.target_index)};
}

std::vector<MarginRow> dataset_margins(const ParamStore& params, const ModelConfig& model, const Dataset& data) {
  std::vector<MarginRow> rows(data.samples.size());
  parallel_for(rows.size(), [&](std::size_t i) { rows[i] = sample_margins(params, model, data.samples[i]); });
  return rows;
}

std::string margins_csv(const std::vector<MarginRow>& rows) {
  std::string s = "sample_id,margin_top,margin_fused\n";
  for (const auto& r : rows)
    s += std::to_string(r.sample_id) + ',' + format_double(r.margin_top) + ',' + format_double(r.margin_fused) + '\n';
  return s;
}

}  // namespace layerfusion
