#include "layerfusion/fusion.hpp"

#include <cstdio>
#include <string>

#include "layerfusion/errors.hpp"

namespace layerfusion {

std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::TopLayer: return "TopLayer";
    case FusionKind::CoarseGrained: return "CoarseGrained";
    case FusionKind::FineGrained: return "FineGrained";
    case FusionKind::DynamicCombination: return "DynamicCombination";
    case FusionKind::DynamicRouting: return "DynamicRouting";
    case FusionKind::SampleSpecific: return "SampleSpecific";
    case FusionKind::RSD: return "RSD";
  }
  return "?";
}

FusionKind parse_fusion_kind(std::string_view name) {
  for (auto k : kAllFusionKinds)
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown fusion kind '" + std::string(name) + "'");
}

namespace {

std::string indexed(const std::string& prefix, std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return prefix + buf;
}

constexpr const char* kAttnWeight = "fusion.layer_attn.weight";
constexpr const char* kAttnBias = "fusion.layer_attn.bias";
constexpr const char* kLayerScores = "fusion.layer_scores";
constexpr const char* kElementScores = "fusion.element_scores";

std::string route_name(std::size_t l) { return indexed("fusion.route.proj", l); }
std::string combine_name(std::size_t l) { return indexed("fusion.combine", l); }

Var linear(Graph& g, const ParamStore& params, const std::string& prefix, Var x) {
  return g.add_row_bias(g.matmul(x, g.param(params, prefix + ".weight")), g.param(params, prefix + ".bias"));
}

// Relevance of each layer for a set of rows, [rows, L+1].
Var layer_relevance(Graph& g, const ParamStore& params, std::span<const Var> layers) {
  const std::size_t d = g.value(layers[0]).cols();
  const Var w = g.reshape(g.param(params, kAttnWeight), {d, 1});
  const Var b = g.param(params, kAttnBias);
  std::vector<Var> cols;
  cols.reserve(layers.size());
  for (Var h : layers) cols.push_back(g.add_row_bias(g.matmul(h, w), b));
  return g.concat_cols(cols);
}

Tensor one_hot_top(std::size_t layers) {
  Tensor t({1, layers});
  t[layers - 1] = 1.0;
  return t;
}

}  // namespace

std::size_t param_count(FusionKind kind, std::size_t d, std::size_t layers) {
  const std::size_t k = layers + 1;
  switch (kind) {
    case FusionKind::TopLayer: return 0;
    case FusionKind::RSD:
    case FusionKind::SampleSpecific: return d + 1;
    case FusionKind::CoarseGrained: return k;
    case FusionKind::FineGrained: return d * k;
    case FusionKind::DynamicRouting: return k * d * d;
    case FusionKind::DynamicCombination: return layers * (2 * d * 4 * d + 4 * d + 4 * d * d + d);
  }
  return 0;
}

std::vector<ParamSpec> fusion_param_specs(FusionKind kind, std::size_t d, std::size_t layers) {
  std::vector<ParamSpec> specs;
  switch (kind) {
    case FusionKind::TopLayer: break;
    case FusionKind::RSD:
    case FusionKind::SampleSpecific:
      specs.push_back({kAttnWeight, {d}, InitScheme::GlorotUniform});
      specs.push_back({kAttnBias, {1}, InitScheme::Zeros});
      break;
    case FusionKind::CoarseGrained: specs.push_back({kLayerScores, {layers + 1}, InitScheme::Zeros}); break;
    case FusionKind::FineGrained: specs.push_back({kElementScores, {layers + 1, d}, InitScheme::Zeros}); break;
    case FusionKind::DynamicRouting:
      for (std::size_t l = 0; l <= layers; ++l) specs.push_back({route_name(l), {d, d}, InitScheme::GlorotUniform});
      break;
    case FusionKind::DynamicCombination:
      for (std::size_t l = 1; l <= layers; ++l) {
        const std::string p = combine_name(l);
        specs.push_back({p + ".in.weight", {2 * d, 4 * d}, InitScheme::GlorotUniform});
        specs.push_back({p + ".in.bias", {4 * d}, InitScheme::Zeros});
        specs.push_back({p + ".out.weight", {4 * d, d}, InitScheme::GlorotUniform});
        specs.push_back({p + ".out.bias", {d}, InitScheme::Zeros});
      }
      break;
  }
  return specs;
}

void validate_fusion_params(FusionKind kind, std::size_t d, std::size_t layers, const ParamStore& params) {
  for (const auto& spec : fusion_param_specs(kind, d, layers)) {
    if (!params.contains(spec.name))
      throw InvalidArgument(std::string("fusion ") + std::string(to_string(kind)) + " needs parameter '" + spec.name + "'");
    if (params.at(spec.name).shape() != spec.shape)
      throw InvalidArgument("fusion parameter '" + spec.name + "' has shape " +
                            shape_string(params.at(spec.name).shape()) + ", expected " + shape_string(spec.shape));
  }
}

FusionVars fuse(Graph& g, const ParamStore& params, FusionKind kind, std::span<const Var> layers,
                const FusionOptions& options) {
  if (layers.size() < 2) throw ShapeError("fuse: need layers 0..L with L >= 1");
  const Tensor& first = g.value(layers[0]);
  const std::size_t n = first.rows(), d = first.cols(), k = layers.size();
  validate_fusion_params(kind, d, k - 1, params);

  switch (kind) {
    case FusionKind::TopLayer:
      return {layers.back(), g.repeat_rows(g.constant(one_hot_top(k)), n), std::nullopt};

    case FusionKind::RSD: {
      const Var rel = layer_relevance(g, params, layers);
      const Var w = g.softmax_rows(rel);
      return {g.layer_mix(w, layers), w, rel};
    }

    case FusionKind::SampleSpecific: {
      std::vector<Var> pooled;
      for (Var h : layers) pooled.push_back(g.mean_rows(h));
      const Var rel = layer_relevance(g, params, pooled);
      const Var w = g.repeat_rows(g.softmax_rows(rel), n);
      return {g.layer_mix(w, layers), w, g.repeat_rows(rel, n)};
    }

    case FusionKind::CoarseGrained: {
      const Var scores = g.reshape(g.param(params, kLayerScores), {1, k});
      const Var w = g.repeat_rows(g.softmax_rows(scores), n);
      return {g.layer_mix(w, layers), w, std::nullopt};
    }

    case FusionKind::FineGrained: {
      // Softmax over layers, independently for each element.
      const Var w = g.transpose(g.softmax_rows(g.transpose(g.param(params, kElementScores))));
      Var fused = g.mul(layers[0], g.repeat_rows(g.slice_rows(w, 0, 1), n));
      for (std::size_t l = 1; l < k; ++l) fused = g.add(fused, g.mul(layers[l], g.repeat_rows(g.slice_rows(w, l, 1), n)));
      const Var mean_w = g.repeat_rows(g.mean_rows(g.transpose(w)), n);
      return {fused, mean_w, std::nullopt};
    }

    case FusionKind::DynamicRouting: {
      if (options.routing_iterations == 0) throw InvalidArgument("dynamic routing needs at least one iteration");
      std::vector<Var> u;
      for (std::size_t l = 0; l < k; ++l) u.push_back(g.matmul(layers[l], g.param(params, route_name(l))));
      Var logits = g.constant(Tensor({n, k}));
      Var coupling{}, fused{};
      for (std::size_t it = 0; it < options.routing_iterations; ++it) {
        coupling = g.softmax_rows(logits);
        fused = g.layer_mix(coupling, u);
        if (it + 1 == options.routing_iterations) break;
        std::vector<Var> agreement;
        for (Var ul : u) agreement.push_back(g.row_dot(ul, fused));
        logits = g.add(logits, g.concat_cols(agreement));
      }
      return {fused, coupling, std::nullopt};
    }

    case FusionKind::DynamicCombination: {
      Var agg = layers[0];
      for (std::size_t l = 1; l < k; ++l) {
        const std::string p = combine_name(l);
        const Var parts[] = {layers[l], agg};
        Var h = g.gelu(linear(g, params, p + ".in", g.concat_cols(parts)));
        agg = g.add(linear(g, params, p + ".out", h), agg);
      }
      return {agg, std::nullopt, std::nullopt};
    }
  }
  throw InvalidArgument("unknown fusion kind");
}

namespace {

std::vector<Var> stack_constants(Graph& g, const LayerStack& stack) {
  std::vector<Var> layers;
  for (std::size_t l = 0; l < stack.layer_count(); ++l) layers.push_back(g.constant(stack.regions_at(l)));
  return layers;
}

FusionWeights weights_of(FusionKind kind, const LayerStack& stack, const ParamStore& params) {
  Graph g;
  const auto layers = stack_constants(g, stack);
  const FusionVars out = fuse(g, params, kind, layers);
  return {g.value(*out.relevance), g.value(*out.weights)};
}

}  // namespace

FusionWeights rsd_weights(const LayerStack& stack, const ParamStore& params) {
  return weights_of(FusionKind::RSD, stack, params);
}

FusionWeights sample_specific_weights(const LayerStack& stack, const ParamStore& params) {
  if (stack.region_count() == 0) throw InvalidArgument("sample_specific_weights: no regions");
  return weights_of(FusionKind::SampleSpecific, stack, params);
}

FusedReps fuse_weighted_sum(const LayerStack& stack, const FusionWeights& w) {
  Graph g;
  const auto layers = stack_constants(g, stack);
  return g.value(g.layer_mix(g.constant(w.weights), layers));
}

FusedReps fuse(const LayerStack& stack, FusionKind kind, const ParamStore& params, const FusionOptions& options) {
  Graph g;
  const auto layers = stack_constants(g, stack);
  return g.value(fuse(g, params, kind, layers, options).fused);
}

FusedReps coarse_grained_fuse(const LayerStack& stack, const ParamStore& params) {
  return fuse(stack, FusionKind::CoarseGrained, params);
}

FusedReps fine_grained_fuse(const LayerStack& stack, const ParamStore& params) {
  return fuse(stack, FusionKind::FineGrained, params);
}

FusedReps dynamic_routing_fuse(const LayerStack& stack, const ParamStore& params, std::size_t iterations) {
  return fuse(stack, FusionKind::DynamicRouting, params, FusionOptions{iterations});
}

FusedReps dynamic_combination_fuse(const LayerStack& stack, const ParamStore& params) {
  return fuse(stack, FusionKind::DynamicCombination, params);
}

Tensor layer_weight_rows(const LayerStack& stack, FusionKind kind, const ParamStore& params,
                         const FusionOptions& options) {
  if (kind == FusionKind::DynamicCombination)
    throw InvalidArgument("DynamicCombination does not produce layer attention weights");
  Graph g;
  const auto layers = stack_constants(g, stack);
  return g.value(*fuse(g, params, kind, layers, options).weights);
}

}  // namespace layerfusion
