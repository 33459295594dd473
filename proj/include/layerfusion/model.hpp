#pragma once

#include <cstdint>
#include <vector>

#include "layerfusion/encoder.hpp"
#include "layerfusion/fusion.hpp"
#include "layerfusion/head.hpp"

namespace layerfusion {

// Encoder, fusion head and scoring head of one grounding model.
struct ModelConfig {
  EncoderConfig encoder;
  FusionKind fusion = FusionKind::RSD;
  FusionOptions fusion_options;

  bool operator==(const ModelConfig& o) const {
    return encoder == o.encoder && fusion == o.fusion &&
           fusion_options.routing_iterations == o.fusion_options.routing_iterations;
  }
};

std::vector<ParamSpec> model_param_specs(const ModelConfig& cfg);
ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardPass {
  EncodedLayers layers;
  FusionVars fusion;
  Var logits;  // [n, 1]
};

ForwardPass forward(Graph& g, const ParamStore& params, const ModelConfig& cfg, const GroundingSample& sample);

// IoU of every region with the sample's ground-truth box.
std::vector<double> iou_targets(const GroundingSample& sample);

// Records the training loss of one sample.
Var sample_loss(Graph& g, const ParamStore& params, const ModelConfig& cfg, const GroundingSample& sample);

struct Prediction {
  MatchScores scores;
  std::size_t index = 0;
  Tensor layer_weights;  // [n, L+1]; empty when the fusion kind has none
  LayerStack stack;
  Tensor fused;
};

Prediction predict(const ParamStore& params, const ModelConfig& cfg, const GroundingSample& sample);

}  // namespace layerfusion
