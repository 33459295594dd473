#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layerfusion/errors.hpp"
#include "layerfusion/geometry.hpp"
#include "layerfusion/graph.hpp"
#include "layerfusion/gradcheck.hpp"
#include "layerfusion/head.hpp"
#include "layerfusion/rng.hpp"

using namespace layerfusion;

namespace {

Box random_box(Rng& rng) {
  const double x1 = 0.8 * rng.uniform(), y1 = 0.8 * rng.uniform();
  return {x1, y1, x1 + 0.01 + 0.19 * rng.uniform(), y1 + 0.01 + 0.19 * rng.uniform()};
}

ParamStore head_params(std::vector<double> w, double b) {
  ParamStore p;
  p.add("head.weight", Tensor::vector(std::move(w)));
  p.add("head.bias", Tensor::scalar(b));
  return p;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("iou hand cases") {
  const Box a{0.0, 0.0, 0.2, 0.2}, b{0.1, 0.1, 0.3, 0.3};
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{0.5, 0.5, 0.6, 0.6}) == 0.0);
  // Touching edges share no area.
  CHECK(iou(a, Box{0.2, 0.0, 0.4, 0.2}) == 0.0);
  // Containment: inner area over outer area.
  CHECK(iou(Box{0.0, 0.0, 0.4, 0.4}, Box{0.1, 0.1, 0.3, 0.3}) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("iou rejects degenerate boxes") {
  const Box ok{0.1, 0.1, 0.2, 0.2};
  CHECK_THROWS_AS(iou(ok, Box{0.3, 0.1, 0.3, 0.2}), InvalidBox);
  CHECK_THROWS_AS(iou(Box{0.3, 0.1, 0.2, 0.2}, ok), InvalidBox);
  CHECK_THROWS_AS(iou(ok, Box{0.0, 0.0, 1.2, 0.5}), InvalidBox);
  CHECK_THROWS_AS(iou(ok, Box{0.0, NAN, 0.5, 0.5}), InvalidBox);
  CHECK_FALSE(is_valid(Box{}));
}

TEST_CASE("iou symmetric, reflexive and bounded over random boxes") {
  Rng rng(77);
  for (int t = 0; t < 5000; ++t) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("iou matches an independent area oracle") {
  Rng rng(5);
  for (int t = 0; t < 2000; ++t) {
    const Box a = random_box(rng), b = random_box(rng);
    // Inclusion-exclusion on the overlap of intervals.
    const double ox = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double oy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ox * oy;
    const double ref = inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter);
    CHECK(iou(a, b) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("iou05 accuracy uses a strict threshold") {
  const Box gt{0.0, 0.0, 0.4, 0.4};
  // Same height, widths chosen for IoU 0.6, 0.5 and 0.
  const Box p06{0.0, 0.0, 0.24, 0.4}, p05{0.0, 0.0, 0.2, 0.4}, p0{0.6, 0.6, 0.8, 0.8};
  CHECK(iou(p06, gt) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(iou(p05, gt) == 0.5);
  const std::vector<Box> pred = {p06, p05, p0}, truth = {gt, gt, gt};
  CHECK(iou05_accuracy(pred, truth) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou05_accuracy(truth, truth) == 1.0);
  CHECK(iou05_accuracy(std::vector<Box>{}, std::vector<Box>{}) == 0.0);
  CHECK_THROWS_AS(iou05_accuracy(pred, std::vector<Box>{gt}), InvalidArgument);
}

}  // TEST_SUITE

TEST_SUITE("head") {

TEST_CASE("score_regions examples") {
  const Tensor fused = Tensor::matrix(2, 2, {std::log(3.0), 5.0, 0.0, 0.0});
  const MatchScores zero = score_regions(fused, head_params({0.0, 0.0}, 0.0));
  CHECK(zero.probs == std::vector<double>{0.5, 0.5});
  const MatchScores e1 = score_regions(fused, head_params({1.0, 0.0}, 0.0));
  CHECK(e1.probs[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(e1.logits[0] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK_THROWS_AS(score_regions(fused, head_params({1.0, 0.0, 0.0}, 0.0)), ShapeError);

  const Tensor same = Tensor::matrix(2, 3, {0.3, -1.0, 2.0, 0.3, -1.0, 2.0});
  const MatchScores s = score_regions(same, head_params({0.2, 0.7, -0.4}, 0.1));
  CHECK(s.logits[0] == s.logits[1]);
}

TEST_CASE("bce examples") {
  CHECK(bce_loss(MatchScores::from_logits({0.0}), {1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(MatchScores::from_logits({40.0}), {1.0}) < 1e-15);
  CHECK(bce_loss(MatchScores::from_logits({-40.0}), {0.0}) < 1e-15);
  for (double z : {-3.0, -0.4, 0.0, 1.7, 8.0})
    CHECK(bce_loss(MatchScores::from_logits({z}), {0.5}) ==
          doctest::Approx(bce_loss(MatchScores::from_logits({-z}), {0.5})).epsilon(1e-14));
  CHECK_THROWS_AS(bce_loss(MatchScores::from_logits({0.0}), {1.5}), InvalidArgument);
  CHECK_THROWS_AS(bce_loss(MatchScores::from_logits({0.0}), {-0.1}), InvalidArgument);
  CHECK_THROWS_AS(bce_loss(MatchScores::from_logits({}), {}), InvalidArgument);
}

TEST_CASE("bce is nonnegative and matches the naive form") {
  Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> z(n), y(n);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = 6.0 * rng.normal();
      y[i] = rng.uniform();
      const double p = 1.0 / (1.0 + std::exp(-z[i]));
      ref -= y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
    }
    ref /= static_cast<double>(n);
    const double loss = bce_loss(MatchScores::from_logits(z), y);
    CHECK(loss >= 0.0);
    CHECK(loss == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("bce gradient against grad_check") {
  Rng rng(8);
  ParamStore p;
  Tensor z({4});
  for (auto& v : z.data()) v = 2.0 * rng.normal();
  p.add("z", z);
  const Tensor y = Tensor::vector({0.0, 0.3, 1.0, 0.7});
  const auto loss = [&](Graph& g, const ParamStore& ps) { return g.bce_with_logits(g.param(ps, "z"), y); };
  CHECK(grad_check(p, loss, all_names(p), 1e-6).max_rel_error < 1e-6);
  Graph g;
  const Tensor grad = g.backward(loss(g, p)).at("z");
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(grad[i] == doctest::Approx((1.0 / (1.0 + std::exp(-z[i])) - y[i]) / 4.0).epsilon(1e-12));
}

TEST_CASE("predict_region") {
  MatchScores s;
  s.probs = {0.1, 0.9, 0.3};
  CHECK(predict_region(s) == 1);
  s.probs = {0.5, 0.5};
  CHECK(predict_region(s) == 0);
  CHECK(predict_region(MatchScores::from_logits({2.0, 2.0, 1.0})) == 0);
  CHECK_THROWS_AS(predict_region(MatchScores{}), InvalidArgument);
  // Probabilities saturate at 1 but logits keep the order.
  CHECK(predict_region(MatchScores::from_logits({40.0, 41.0})) == 1);
}

TEST_CASE("prediction invariant under increasing maps, equivariant under permutations") {
  Rng rng(19);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(8);
    std::vector<double> z(n);
    for (auto& v : z) v = rng.normal();
    const std::size_t base = predict_region(MatchScores::from_logits(z));
    std::vector<double> m = z;
    for (auto& v : m) v = std::exp(0.5 * v) + std::cbrt(v);
    CHECK(predict_region(MatchScores::from_logits(m)) == base);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Tensor fused({n, 3});
    for (auto& v : fused.data()) v = rng.normal();
    Tensor shuffled({n, 3});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 3; ++j) shuffled.at(i, j) = fused.at(perm[i], j);
    const ParamStore hp = head_params({rng.normal(), rng.normal(), rng.normal()}, rng.normal());
    const MatchScores a = score_regions(fused, hp), b = score_regions(shuffled, hp);
    for (std::size_t i = 0; i < n; ++i) CHECK(b.logits[i] == a.logits[perm[i]]);
    CHECK(perm[predict_region(b)] == predict_region(a));
  }
}

}  // TEST_SUITE
