#include "layerfusion/model.hpp"

namespace layerfusion {

std::vector<ParamSpec> model_param_specs(const ModelConfig& cfg) {
  auto specs = encoder_param_specs(cfg.encoder);
  for (auto& s : fusion_param_specs(cfg.fusion, cfg.encoder.d, cfg.encoder.layers)) specs.push_back(std::move(s));
  for (auto& s : head_param_specs(cfg.encoder.d)) specs.push_back(std::move(s));
  return specs;
}

ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed) { return init_params(model_param_specs(cfg), seed); }

ForwardPass forward(Graph& g, const ParamStore& params, const ModelConfig& cfg, const GroundingSample& sample) {
  ForwardPass out;
  out.layers = encode(g, params, cfg.encoder, sample);
  out.fusion = fuse(g, params, cfg.fusion, out.layers.regions, cfg.fusion_options);
  out.logits = head_logits(g, params, out.fusion.fused);
  return out;
}

std::vector<double> iou_targets(const GroundingSample& sample) {
  std::vector<double> t;
  t.reserve(sample.regions.size());
  const Box& gt = sample.target_box();
  for (const auto& r : sample.regions) t.push_back(iou(r.box, gt));
  return t;
}

Var sample_loss(Graph& g, const ParamStore& params, const ModelConfig& cfg, const GroundingSample& sample) {
  const ForwardPass pass = forward(g, params, cfg, sample);
  return g.bce_with_logits(pass.logits, Tensor::vector(iou_targets(sample)));
}

namespace {

Tensor stack_of(const Graph& g, const std::vector<Var>& layers) {
  const Tensor& first = g.value(layers[0]);
  Tensor out({layers.size(), first.rows(), first.cols()});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& t = g.value(layers[l]);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(l * t.size()));
  }
  return out;
}

}  // namespace

Prediction predict(const ParamStore& params, const ModelConfig& cfg, const GroundingSample& sample) {
  Graph g;
  const ForwardPass pass = forward(g, params, cfg, sample);
  Prediction p;
  p.scores = MatchScores::from_logits(g.value(pass.logits).storage());
  p.index = predict_region(p.scores);
  if (pass.fusion.weights) p.layer_weights = g.value(*pass.fusion.weights);
  p.stack = {stack_of(g, pass.layers.regions), stack_of(g, pass.layers.tokens)};
  p.fused = g.value(pass.fusion.fused);
  return p;
}

}  // namespace layerfusion
