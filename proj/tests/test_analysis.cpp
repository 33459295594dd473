#include <doctest.h>

#include <cmath>

#include "layerfusion/analysis.hpp"
#include "layerfusion/errors.hpp"
#include "layerfusion/rng.hpp"
#include "layerfusion/runner.hpp"

using namespace layerfusion;

namespace {

ModelConfig analysis_model(FusionKind kind) {
  ModelConfig m;
  m.encoder.d = 8;
  m.encoder.layers = 3;
  m.encoder.heads = 2;
  m.encoder.ffn_mult = 2;
  m.encoder.vocab_size = 12;
  m.encoder.max_tokens = 8;
  m.encoder.region_feature_dim = 6;
  m.fusion = kind;
  return m;
}

Dataset random_dataset(std::size_t count, std::uint64_t seed) {
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    GroundingSample s = random_sample(3 + i % 4, 5, 12, 6, derive_seed(seed, i));
    s.id = i;
    ds.samples.push_back(s);
  }
  return ds;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
Tensor random_rotation(std::size_t d, Rng& rng) {
  Tensor q = random_matrix(d, d, rng);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += q.at(i, j) * q.at(i, k);
      for (std::size_t i = 0; i < d; ++i) q.at(i, j) -= dot * q.at(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q.at(i, j) * q.at(i, j);
    for (std::size_t i = 0; i < d; ++i) q.at(i, j) /= std::sqrt(norm);
  }
  return q;
}

Tensor times(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

double dist(const Tensor& t, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t j = 0; j < t.cols(); ++j) s += (t.at(a, j) - t.at(b, j)) * (t.at(a, j) - t.at(b, j));
  return std::sqrt(s);
}

double dist2d(const Projection2D& p, std::size_t a, std::size_t b) {
  return std::hypot(p.points[a].x - p.points[b].x, p.points[a].y - p.points[b].y);
}

std::vector<IouBand> disjoint(std::size_t n) { return std::vector<IouBand>(n, IouBand::Disjoint); }

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("profiles are stochastic per group for every weighted kind") {
  const Dataset ds = random_dataset(12, 4);
  for (auto k : kAllFusionKinds) {
    const ModelConfig m = analysis_model(k);
    const ParamStore p = init_model(m, 3);
    if (k == FusionKind::DynamicCombination) {
      CHECK_THROWS_AS(attention_group_profile(p, m, ds), UnsupportedOp);
      continue;
    }
    const auto prof = attention_group_profile(p, m, ds);
    std::size_t regions = 0;
    for (const auto& s : ds.samples) regions += s.regions.size();
    CHECK(prof[0].region_count + prof[1].region_count == regions);
    for (const auto& g : prof) {
      if (g.region_count == 0) continue;
      double sum = 0.0;
      for (double w : g.mean_weight_per_layer) {
        CHECK(w >= 0.0);
        sum += w;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("zero layer-attention vector gives uniform profiles") {
  const ModelConfig m = analysis_model(FusionKind::RSD);
  ParamStore p = init_model(m, 3);
  p.at("fusion.layer_attn.weight").fill(0.0);
  const auto prof = attention_group_profile(p, m, random_dataset(10, 9));
  for (const auto& g : prof)
    for (double w : g.mean_weight_per_layer) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("a dataset of ground-truth-only samples leaves the disjoint group empty") {
  Dataset ds;
  for (std::size_t i = 0; i < 4; ++i) {
    GroundingSample s = random_sample(1, 4, 12, 6, i);
    s.target_index = 0;
    ds.samples.push_back(s);
  }
  const ModelConfig m = analysis_model(FusionKind::RSD);
  const auto prof = attention_group_profile(init_model(m, 1), m, ds);
  CHECK(prof[0].group == IouGroup::Overlapping);
  CHECK(prof[0].region_count == 4);
  CHECK(prof[1].region_count == 0);
  const std::string csv = profile_csv(prof);
  CHECK(csv.rfind("group,layer,mean_weight,count\n", 0) == 0);
  CHECK(csv.find("iou=0,0,0,0") != std::string::npos);
  CHECK_FALSE(trend_observation(prof).empty());
}

TEST_CASE("layer trend arithmetic") {
  AttentionProfile p;
  p.mean_weight_per_layer = {0.0, 0.0, 0.0, 1.0};
  p.region_count = 1;
  const LayerTrend t = layer_trend(p);
  CHECK(t.expected_layer == 3.0);
  CHECK(t.uniform_expected_layer == 1.5);
  CHECK(t.upper_half_share == 1.0);
}

TEST_CASE("iou bands") {
  CHECK(iou_band(1.0, true) == IouBand::GroundTruth);
  CHECK(iou_band(0.3, true) == IouBand::GroundTruth);
  CHECK(iou_band(0.51, false) == IouBand::High);
  CHECK(iou_band(0.5, false) == IouBand::Overlap);
  CHECK(iou_band(1e-9, false) == IouBand::Overlap);
  CHECK(iou_band(0.0, false) == IouBand::Disjoint);
}

TEST_CASE("jacobi reconstructs symmetric matrices") {
  Rng rng(2);
  for (std::size_t d : {1, 2, 5, 12}) {
    const Tensor a = random_matrix(d, d, rng);
    Tensor s({d, d});
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) s.at(i, j) = a.at(i, j) + a.at(j, i);
    const SymmetricEigen e = jacobi_eigen(s);
    for (std::size_t k = 1; k < d; ++k) CHECK(e.values[k - 1] >= e.values[k]);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double rec = 0.0, orth = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          rec += e.vectors.at(i, k) * e.values[k] * e.vectors.at(j, k);
          orth += e.vectors.at(k, i) * e.vectors.at(k, j);
        }
        CHECK(rec == doctest::Approx(s.at(i, j)).epsilon(1e-10).scale(1.0));
        CHECK(orth == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10).scale(1.0));
      }
  }
  CHECK(jacobi_eigen(Tensor::matrix(2, 2, {2, 1, 1, 2})).values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(jacobi_eigen(Tensor({2, 3})), ShapeError);
}

TEST_CASE("pca: collinear points are rank one") {
  Rng rng(6);
  const std::size_t n = 7, d = 5;
  std::vector<double> dir(d), base(d);
  for (auto& v : dir) v = rng.normal();
  for (auto& v : base) v = rng.normal();
  Tensor reps({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.normal();
    for (std::size_t j = 0; j < d; ++j) reps.at(i, j) = base[j] + t * dir[j];
  }
  const Projection2D p = pca_project(reps, disjoint(n));
  CHECK(p.explained_variance[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(p.explained_variance[1]) <= 1e-9);
  for (const auto& pt : p.points) CHECK(std::abs(pt.y) <= 1e-9);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) CHECK(dist2d(p, a, b) == doctest::Approx(dist(reps, a, b)).epsilon(1e-9));
}

TEST_CASE("pca: contraction, variance bounds and sign convention") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 3 + rng.below(10), d = 2 + rng.below(10);
    const Tensor reps = random_matrix(n, d, rng);
    const Projection2D p = pca_project(reps, disjoint(n));
    CHECK(p.explained_variance[0] >= p.explained_variance[1]);
    CHECK(p.explained_variance[1] >= 0.0);
    CHECK(p.explained_variance[0] + p.explained_variance[1] <= 1.0 + 1e-12);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) CHECK(dist2d(p, a, b) <= dist(reps, a, b) + 1e-12);
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t first = 0;
      while (first < d && std::abs(p.components.at(first, c)) <= 1e-12) ++first;
      REQUIRE(first < d);
      CHECK(p.components.at(first, c) > 0.0);
    }
  }
}

TEST_CASE("pca: rotating the inputs preserves projected distances") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 6, d = 4;
    const Tensor reps = random_matrix(n, d, rng);
    const Projection2D a = pca_project(reps, disjoint(n));
    const Projection2D b = pca_project(times(reps, random_rotation(d, rng)), disjoint(n));
    CHECK(b.explained_variance[0] == doctest::Approx(a.explained_variance[0]).epsilon(1e-9));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) CHECK(dist2d(b, i, j) == doctest::Approx(dist2d(a, i, j)).epsilon(1e-8));
  }
}

TEST_CASE("pca on model representations") {
  const ModelConfig m = analysis_model(FusionKind::RSD);
  const ParamStore p = init_model(m, 2);
  const GroundingSample s = random_sample(5, 4, 12, 6, 3);
  const Projection2D fused = pca_project_regions(p, m, s);
  CHECK(fused.points.size() == 5);
  CHECK(fused.points[s.target_index].band == IouBand::GroundTruth);
  CHECK(pca_project_regions(p, m, s, 3).points.size() == 5);
  CHECK_THROWS_AS(pca_project_regions(p, m, s, 4), InvalidArgument);
  CHECK_THROWS_AS(pca_project_regions(p, m, random_sample(2, 4, 12, 6, 3)), InvalidArgument);
  CHECK(projection_csv(fused).rfind("region_id,x,y,iou_band\n", 0) == 0);
}

TEST_CASE("nearest-neighbour margin") {
  const double h = std::sqrt(3.0) / 2.0;
  const Tensor tri = Tensor::matrix(3, 2, {0.0, 0.0, 1.0, 0.0, 0.5, h});
  for (std::size_t g = 0; g < 3; ++g) CHECK(nearest_neighbor_margin(tri, g) == doctest::Approx(1.0).epsilon(1e-15));
  const Tensor dup = Tensor::matrix(3, 2, {0.2, 0.3, 5.0, 5.0, 0.2, 0.3});
  CHECK(nearest_neighbor_margin(dup, 0) == 0.0);
  CHECK_THROWS_AS(nearest_neighbor_margin(Tensor::matrix(1, 2, {0, 0}), 0), InvalidArgument);

  const ModelConfig m = analysis_model(FusionKind::RSD);
  const Dataset ds = random_dataset(5, 1);
  const auto rows = dataset_margins(init_model(m, 2), m, ds);
  CHECK(rows.size() == 5);
  for (const auto& r : rows) {
    CHECK(r.margin_top >= 0.0);
    CHECK(r.margin_fused >= 0.0);
  }
  CHECK(margins_csv(rows).rfind("sample_id,margin_top,margin_fused\n", 0) == 0);
}

}  // TEST_SUITE
