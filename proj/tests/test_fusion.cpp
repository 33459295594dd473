#include <doctest.h>

#include <cmath>

#include "layerfusion/errors.hpp"
#include "layerfusion/fusion.hpp"
#include "layerfusion/model.hpp"
#include "layerfusion/rng.hpp"

using namespace layerfusion;

namespace {

LayerStack random_stack(std::size_t layers, std::size_t n, std::size_t d, Rng& rng) {
  std::vector<Tensor> ls;
  for (std::size_t l = 0; l <= layers; ++l) {
    Tensor t({n, d});
    for (auto& v : t.data()) v = rng.normal();
    ls.push_back(t);
  }
  return LayerStack::from_region_layers(ls);
}

ParamStore fusion_params(FusionKind kind, std::size_t d, std::size_t layers, std::uint64_t seed) {
  ParamStore p = init_params(fusion_param_specs(kind, d, layers), seed);
  // Zero-initialized static scores would make every property trivially true.
  Rng rng(seed ^ 0xABCDEF);
  for (auto& [name, t] : p.entries())
    for (auto& v : t.data()) v += 0.5 * rng.normal();
  return p;
}

// Direct evaluation of relevance = W . h + b and its softmax, by loops.
std::vector<double> rsd_row_oracle(const LayerStack& s, std::size_t i, const ParamStore& p) {
  const Tensor& w = p.at("fusion.layer_attn.weight");
  const double b = p.at("fusion.layer_attn.bias")[0];
  std::vector<double> rel(s.layer_count());
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    const Tensor h = s.regions_at(l);
    double acc = b;
    for (std::size_t j = 0; j < s.width(); ++j) acc += w[j] * h.at(i, j);
    rel[l] = acc;
  }
  double mx = rel[0];
  for (double r : rel) mx = std::max(mx, r);
  double z = 0.0;
  for (double& r : rel) z += (r = std::exp(r - mx));
  for (double& r : rel) r /= z;
  return rel;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("kind names round-trip exactly") {
  CHECK(kAllFusionKinds.size() == 7);
  for (auto k : kAllFusionKinds) CHECK(parse_fusion_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_fusion_kind("rsd"), InvalidArgument);
}

TEST_CASE("parameter counts at d=768, L=12") {
  CHECK(param_count(FusionKind::RSD, 768, 12) == 769);
  CHECK(param_count(FusionKind::SampleSpecific, 768, 12) == 769);
  CHECK(param_count(FusionKind::CoarseGrained, 768, 12) == 13);
  CHECK(param_count(FusionKind::FineGrained, 768, 12) == 9984);
  CHECK(param_count(FusionKind::DynamicRouting, 768, 12) == 7667712);
  CHECK(param_count(FusionKind::TopLayer, 768, 12) == 0);
  CHECK(param_count(FusionKind::DynamicCombination, 768, 12) == 12 * (2 * 768 * 4 * 768 + 4 * 768 + 4 * 768 * 768 + 768));
}

TEST_CASE("parameter specs agree with param_count") {
  for (auto k : kAllFusionKinds)
    for (std::size_t d : {1, 4, 16})
      for (std::size_t L : {1, 2, 5}) {
        std::size_t total = 0;
        for (const auto& s : fusion_param_specs(k, d, L)) total += shape_size(s.shape);
        CHECK(total == param_count(k, d, L));
      }
}

TEST_CASE("rsd: zero weight vector gives uniform rows") {
  Rng rng(1);
  const LayerStack s = random_stack(3, 4, 5, rng);
  ParamStore p = fusion_params(FusionKind::RSD, 5, 3, 2);
  p.at("fusion.layer_attn.weight").fill(0.0);
  const FusionWeights w = rsd_weights(s, p);
  for (double v : w.weights.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("rsd: d=1, L=1 closed form") {
  const LayerStack s = LayerStack::from_region_layers({Tensor::matrix(1, 1, {0.0}), Tensor::matrix(1, 1, {std::log(2.0)})});
  ParamStore p;
  p.add("fusion.layer_attn.weight", Tensor::vector({1.0}));
  p.add("fusion.layer_attn.bias", Tensor::scalar(0.0));
  const FusionWeights w = rsd_weights(s, p);
  CHECK(w.weights[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(w.weights[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(w.relevance[1] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("rsd: matches a loop oracle, identical stacks share rows, distinct stacks differ") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    LayerStack s = random_stack(3, 3, 6, rng);
    // Make region 2 a copy of region 0.
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t j = 0; j < 6; ++j) s.region_reps[(l * 3 + 2) * 6 + j] = s.region_reps[(l * 3 + 0) * 6 + j];
    const ParamStore p = fusion_params(FusionKind::RSD, 6, 3, seed);
    const FusionWeights w = rsd_weights(s, p);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto ref = rsd_row_oracle(s, i, p);
      for (std::size_t l = 0; l < 4; ++l) CHECK(w.weights.at(i, l) == doctest::Approx(ref[l]).epsilon(1e-12));
    }
    for (std::size_t l = 0; l < 4; ++l) CHECK(w.weights.at(0, l) == w.weights.at(2, l));
    bool differs = false;
    for (std::size_t l = 0; l < 4; ++l) differs = differs || w.weights.at(0, l) != w.weights.at(1, l);
    CHECK(differs);
  }
}

TEST_CASE("rsd: a region's row ignores other regions' stacks") {
  Rng rng(5);
  const LayerStack s = random_stack(2, 4, 3, rng);
  LayerStack t = s;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t j = 0; j < 3; ++j) t.region_reps[(l * 4 + 3) * 3 + j] += 1.7;
  const ParamStore p = fusion_params(FusionKind::RSD, 3, 2, 9);
  const FusionWeights a = rsd_weights(s, p), b = rsd_weights(t, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t l = 0; l < 3; ++l) CHECK(a.weights.at(i, l) == b.weights.at(i, l));
}

TEST_CASE("weighted sum examples") {
  const LayerStack s =
      LayerStack::from_region_layers({Tensor::matrix(1, 2, {1.0, 0.0}), Tensor::matrix(1, 2, {0.0, 1.0})});
  FusionWeights w;
  w.weights = Tensor::matrix(1, 2, {0.25, 0.75});
  const Tensor f = fuse_weighted_sum(s, w);
  CHECK(f[0] == 0.25);
  CHECK(f[1] == 0.75);

  Rng rng(3);
  const Tensor v = random_stack(0, 2, 4, rng).regions_at(0);
  const LayerStack same = LayerStack::from_region_layers({v, v, v});
  w.weights = Tensor::matrix(2, 3, {0.2, 0.3, 0.5, 0.6, 0.1, 0.3});
  const Tensor g = fuse_weighted_sum(same, w);
  for (std::size_t k = 0; k < v.size(); ++k) CHECK(g[k] == doctest::Approx(v[k]).epsilon(1e-15));

  w.weights = Tensor::matrix(2, 3, {0, 0, 1, 0, 0, 1});
  const LayerStack r = random_stack(2, 2, 4, rng);
  CHECK(fuse_weighted_sum(r, w) == r.regions_at(2));
}

TEST_CASE("sample-specific: broadcast rows, n=1 equals RSD, opposite stacks pool to uniform") {
  Rng rng(11);
  const LayerStack s = random_stack(3, 5, 4, rng);
  const ParamStore p = fusion_params(FusionKind::SampleSpecific, 4, 3, 12);
  const FusionWeights w = sample_specific_weights(s, p);
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t l = 0; l < 4; ++l) CHECK(w.weights.at(i, l) == w.weights.at(0, l));

  const LayerStack one = random_stack(3, 1, 4, rng);
  const FusionWeights a = sample_specific_weights(one, p), b = rsd_weights(one, p);
  for (std::size_t l = 0; l < 4; ++l) CHECK(a.weights[l] == doctest::Approx(b.weights[l]).epsilon(1e-15));
  CHECK(fuse(one, FusionKind::SampleSpecific, p) == fuse(one, FusionKind::RSD, p));

  std::vector<Tensor> layers;
  for (std::size_t l = 0; l < 4; ++l) {
    Tensor t({2, 4});
    for (std::size_t j = 0; j < 4; ++j) {
      t.at(0, j) = rng.normal();
      t.at(1, j) = -t.at(0, j);
    }
    layers.push_back(t);
  }
  ParamStore q = p;
  q.at("fusion.layer_attn.bias")[0] = 0.0;
  const FusionWeights u = sample_specific_weights(LayerStack::from_region_layers(layers), q);
  for (double v : u.weights.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("coarse-grained examples") {
  Rng rng(4);
  const LayerStack s = random_stack(2, 3, 4, rng);
  ParamStore p = init_params(fusion_param_specs(FusionKind::CoarseGrained, 4, 2), 1);
  const Tensor f = coarse_grained_fuse(s, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double mean = (s.regions_at(0).at(i, j) + s.regions_at(1).at(i, j) + s.regions_at(2).at(i, j)) / 3.0;
      CHECK(f.at(i, j) == doctest::Approx(mean).epsilon(1e-14));
    }

  const LayerStack two = random_stack(1, 2, 3, rng);
  ParamStore q;
  q.add("fusion.layer_scores", Tensor::vector({std::log(1.0), std::log(2.0)}));
  const Tensor w = layer_weight_rows(two, FusionKind::CoarseGrained, q);
  CHECK(w.at(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(w.at(1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(layer_weight_rows(random_stack(1, 2, 3, rng), FusionKind::CoarseGrained, q) == w);
}

TEST_CASE("fine-grained examples") {
  Rng rng(6);
  const LayerStack s = random_stack(2, 3, 4, rng);
  const ParamStore zero = init_params(fusion_param_specs(FusionKind::FineGrained, 4, 2), 1);
  const ParamStore czero = init_params(fusion_param_specs(FusionKind::CoarseGrained, 4, 2), 1);
  const Tensor a = fine_grained_fuse(s, zero), b = coarse_grained_fuse(s, czero);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-14));

  ParamStore fine, coarse;
  const std::vector<double> scores = {0.3, -1.1, 0.8};
  Tensor e({3, 4});
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t j = 0; j < 4; ++j) e.at(l, j) = scores[l];
  fine.add("fusion.element_scores", e);
  coarse.add("fusion.layer_scores", Tensor::vector(scores));
  const Tensor c = fine_grained_fuse(s, fine), d = coarse_grained_fuse(s, coarse);
  for (std::size_t k = 0; k < c.size(); ++k) CHECK(c[k] == doctest::Approx(d[k]).epsilon(1e-14));
}

TEST_CASE("fine-grained: per-element weights over layers, by loops") {
  Rng rng(21);
  const LayerStack s = random_stack(2, 2, 3, rng);
  const ParamStore p = fusion_params(FusionKind::FineGrained, 3, 2, 4);
  const Tensor& e = p.at("fusion.element_scores");
  const Tensor f = fine_grained_fuse(s, p);
  for (std::size_t j = 0; j < 3; ++j) {
    double z = 0.0;
    for (std::size_t l = 0; l < 3; ++l) z += std::exp(e.at(l, j));
    for (std::size_t i = 0; i < 2; ++i) {
      double ref = 0.0;
      for (std::size_t l = 0; l < 3; ++l) ref += std::exp(e.at(l, j)) / z * s.regions_at(l).at(i, j);
      CHECK(f.at(i, j) == doctest::Approx(ref).epsilon(1e-13));
    }
  }
}

TEST_CASE("dynamic routing examples") {
  Rng rng(8);
  const std::size_t d = 4, L = 2;
  ParamStore ident;
  for (std::size_t l = 0; l <= L; ++l) {
    Tensor eye({d, d});
    for (std::size_t j = 0; j < d; ++j) eye.at(j, j) = 1.0;
    char name[32];
    std::snprintf(name, sizeof name, "fusion.route.proj%02zu", l);
    ident.add(name, eye);
  }
  const Tensor v = random_stack(0, 3, d, rng).regions_at(0);
  const LayerStack same = LayerStack::from_region_layers({v, v, v});
  for (std::size_t it : {1, 2, 3, 5}) {
    const Tensor f = dynamic_routing_fuse(same, ident, it);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == doctest::Approx(v[k]).epsilon(1e-14));
  }

  const LayerStack s = random_stack(L, 3, d, rng);
  const ParamStore p = fusion_params(FusionKind::DynamicRouting, d, L, 3);
  const Tensor f1 = dynamic_routing_fuse(s, p, 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t l = 0; l <= L; ++l) {
        char name[32];
        std::snprintf(name, sizeof name, "fusion.route.proj%02zu", l);
        const Tensor& P = p.at(name);
        for (std::size_t q = 0; q < d; ++q) mean += s.regions_at(l).at(i, q) * P.at(q, j);
      }
      CHECK(f1.at(i, j) == doctest::Approx(mean / 3.0).epsilon(1e-13));
    }
  CHECK_THROWS_AS(dynamic_routing_fuse(s, p, 0), InvalidArgument);
}

TEST_CASE("dynamic routing: three iterations by loops") {
  Rng rng(13);
  const std::size_t d = 3, L = 2, n = 2;
  const LayerStack s = random_stack(L, n, d, rng);
  const ParamStore p = fusion_params(FusionKind::DynamicRouting, d, L, 5);
  const Tensor f = dynamic_routing_fuse(s, p, 3);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> u(L + 1, std::vector<double>(d, 0.0));
    for (std::size_t l = 0; l <= L; ++l) {
      char name[32];
      std::snprintf(name, sizeof name, "fusion.route.proj%02zu", l);
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t q = 0; q < d; ++q) u[l][j] += s.regions_at(l).at(i, q) * p.at(name).at(q, j);
    }
    std::vector<double> b(L + 1, 0.0), fused(d);
    for (int it = 0; it < 3; ++it) {
      double z = 0.0;
      for (double x : b) z += std::exp(x);
      std::fill(fused.begin(), fused.end(), 0.0);
      for (std::size_t l = 0; l <= L; ++l)
        for (std::size_t j = 0; j < d; ++j) fused[j] += std::exp(b[l]) / z * u[l][j];
      for (std::size_t l = 0; l <= L; ++l)
        for (std::size_t j = 0; j < d; ++j) b[l] += u[l][j] * fused[j];
    }
    for (std::size_t j = 0; j < d; ++j) CHECK(f.at(i, j) == doctest::Approx(fused[j]).epsilon(1e-12));
  }
}

TEST_CASE("dynamic combination: zero weights leave layer 0, shape") {
  Rng rng(10);
  const LayerStack s = random_stack(2, 3, 16, rng);
  ParamStore p = init_params(fusion_param_specs(FusionKind::DynamicCombination, 16, 2), 1);
  const Tensor f = dynamic_combination_fuse(s, p);
  CHECK(f.shape() == Shape{3, 16});
  for (auto& [name, t] : p.entries()) t.fill(0.0);
  CHECK(dynamic_combination_fuse(s, p) == s.regions_at(0));
  CHECK_THROWS_AS(layer_weight_rows(s, FusionKind::DynamicCombination, p), InvalidArgument);
}

TEST_CASE("dispatcher: TopLayer, saturated RSD, kind/params mismatch") {
  Rng rng(12);
  const LayerStack s = random_stack(3, 4, 5, rng);
  CHECK(fuse(s, FusionKind::TopLayer, ParamStore{}) == s.regions_at(3));
  CHECK_THROWS_AS(fuse(s, FusionKind::RSD, ParamStore{}), InvalidArgument);
  ParamStore wrong;
  wrong.add("fusion.layer_scores", Tensor::vector({0.0, 0.0}));
  CHECK_THROWS_AS(fuse(s, FusionKind::CoarseGrained, wrong), InvalidArgument);
}

TEST_CASE("graph fusion and layer weights are finite for every kind") {
  Rng rng(14);
  const LayerStack s = random_stack(2, 3, 4, rng);
  for (auto k : kAllFusionKinds) {
    const ParamStore p = fusion_params(k, 4, 2, 15);
    const Tensor f = fuse(s, k, p);
    CHECK(f.shape() == Shape{3, 4});
    CHECK(f.all_finite());
    if (k == FusionKind::DynamicCombination) continue;
    const Tensor w = layer_weight_rows(s, k, p);
    CHECK(w.shape() == Shape{3, 3});
    for (std::size_t i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (std::size_t l = 0; l < 3; ++l) sum += w.at(i, l);
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("model parameter store counts match param_count") {
  for (auto k : kAllFusionKinds) {
    ModelConfig m;
    m.encoder.d = 8;
    m.encoder.layers = 3;
    m.encoder.heads = 2;
    m.encoder.vocab_size = 10;
    m.encoder.region_feature_dim = 4;
    m.fusion = k;
    const ParamStore p = init_model(m, 1);
    CHECK(p.parameter_count("fusion.") == param_count(k, 8, 3));
    CHECK(p.parameter_count("head.") == 9);
  }
}

}  // TEST_SUITE
