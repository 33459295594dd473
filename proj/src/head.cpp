#include "layerfusion/head.hpp"

#include "layerfusion/errors.hpp"

namespace layerfusion {

MatchScores MatchScores::from_logits(std::vector<double> logits) {
  MatchScores s;
  s.probs.reserve(logits.size());
  for (double z : logits) s.probs.push_back(sigmoid(z));
  s.logits = std::move(logits);
  return s;
}

std::vector<ParamSpec> head_param_specs(std::size_t d) {
  return {{"head.weight", {d}, InitScheme::GlorotUniform}, {"head.bias", {1}, InitScheme::Zeros}};
}

Var head_logits(Graph& g, const ParamStore& params, Var fused) {
  const std::size_t d = g.value(fused).cols();
  const Var w = g.reshape(g.param(params, "head.weight"), {d, 1});
  return g.add_row_bias(g.matmul(fused, w), g.param(params, "head.bias"));
}

MatchScores score_regions(const Tensor& fused, const ParamStore& params) {
  if (params.at("head.weight").size() != fused.cols())
    throw ShapeError("score_regions: head width " + std::to_string(params.at("head.weight").size()) +
                     " does not match representation width " + std::to_string(fused.cols()));
  Graph g;
  const Tensor& z = g.value(head_logits(g, params, g.constant(fused)));
  return MatchScores::from_logits(z.storage());
}

double bce_loss(const MatchScores& scores, const std::vector<double>& targets) {
  if (scores.logits.empty()) throw InvalidArgument("bce_loss: no regions");
  Graph g;
  const Var z = g.constant(Tensor::vector(scores.logits));
  return g.value(g.bce_with_logits(z, Tensor::vector(targets)))[0];
}

std::size_t predict_region(const MatchScores& scores) {
  // Logits order regions exactly like the probabilities but do not saturate.
  const auto& v = scores.logits.empty() ? scores.probs : scores.logits;
  if (v.empty()) throw InvalidArgument("predict_region: empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace layerfusion
