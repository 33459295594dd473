#pragma once

#include <cstddef>
#include <vector>

#include "layerfusion/graph.hpp"
#include "layerfusion/params.hpp"

namespace layerfusion {

struct MatchScores {
  std::vector<double> logits;
  std::vector<double> probs;  // sigmoid(logits)

  static MatchScores from_logits(std::vector<double> logits);
};

std::vector<ParamSpec> head_param_specs(std::size_t d);

// Linear readout W_s . fused[i] + b_s, recorded on g; returns [n, 1] logits.
Var head_logits(Graph& g, const ParamStore& params, Var fused);

// fused [n, d] -> per-region match scores.
MatchScores score_regions(const Tensor& fused, const ParamStore& params);

// Mean binary cross-entropy between sigmoid(logits) and IoU targets, in the
// stable logit form. Targets must lie in [0, 1].
double bce_loss(const MatchScores& scores, const std::vector<double>& targets);

// Index of the highest probability; ties go to the lowest index.
std::size_t predict_region(const MatchScores& scores);

}  // namespace layerfusion
