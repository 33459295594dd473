#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "layerfusion/encoder.hpp"
#include "layerfusion/graph.hpp"
#include "layerfusion/params.hpp"

namespace layerfusion {

enum class FusionKind { TopLayer, CoarseGrained, FineGrained, DynamicCombination, DynamicRouting, SampleSpecific, RSD };

inline constexpr std::array<FusionKind, 7> kAllFusionKinds = {
    FusionKind::TopLayer,       FusionKind::CoarseGrained,  FusionKind::FineGrained, FusionKind::DynamicCombination,
    FusionKind::DynamicRouting, FusionKind::SampleSpecific, FusionKind::RSD};

std::string_view to_string(FusionKind kind);
FusionKind parse_fusion_kind(std::string_view name);

struct FusionOptions {
  std::size_t routing_iterations = 3;
};

// Extra trainable scalars a fusion head adds on top of the encoder.
std::size_t param_count(FusionKind kind, std::size_t d, std::size_t layers);

std::vector<ParamSpec> fusion_param_specs(FusionKind kind, std::size_t d, std::size_t layers);

// Throws InvalidArgument when `params` lacks an entry `kind` needs or an
// entry has the wrong shape.
void validate_fusion_params(FusionKind kind, std::size_t d, std::size_t layers, const ParamStore& params);

struct FusionVars {
  Var fused;                   // [n, d]
  std::optional<Var> weights;  // [n, L+1] for kinds with per-layer weights
  std::optional<Var> relevance;
};

// Records the fusion of per-layer region representations (index 0..L) on g.
FusionVars fuse(Graph& g, const ParamStore& params, FusionKind kind, std::span<const Var> layers,
                const FusionOptions& options = {});

// Per-region relevance scores and their row softmax over layers.
struct FusionWeights {
  Tensor relevance;  // [n, L+1]
  Tensor weights;    // [n, L+1]
};

using FusedReps = Tensor;  // [n, d]

FusionWeights rsd_weights(const LayerStack& stack, const ParamStore& params);
FusionWeights sample_specific_weights(const LayerStack& stack, const ParamStore& params);
FusedReps fuse_weighted_sum(const LayerStack& stack, const FusionWeights& w);
FusedReps coarse_grained_fuse(const LayerStack& stack, const ParamStore& params);
FusedReps fine_grained_fuse(const LayerStack& stack, const ParamStore& params);
FusedReps dynamic_routing_fuse(const LayerStack& stack, const ParamStore& params, std::size_t iterations = 3);
FusedReps dynamic_combination_fuse(const LayerStack& stack, const ParamStore& params);
FusedReps fuse(const LayerStack& stack, FusionKind kind, const ParamStore& params, const FusionOptions& options = {});

// Weight rows a kind assigns to each region, [n, L+1]. TopLayer is one-hot
// on L, FineGrained is averaged over elements and DynamicRouting reports its
// final coupling coefficients. DynamicCombination has no layer weights and
// raises InvalidArgument.
Tensor layer_weight_rows(const LayerStack& stack, FusionKind kind, const ParamStore& params,
                         const FusionOptions& options = {});

}  // namespace layerfusion
