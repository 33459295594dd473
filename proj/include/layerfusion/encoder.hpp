#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "layerfusion/graph.hpp"
#include "layerfusion/params.hpp"
#include "layerfusion/sample.hpp"

namespace layerfusion {

enum class StreamKind { Single, Dual };

std::string_view to_string(StreamKind kind);
StreamKind parse_stream_kind(std::string_view name);

// Layer budget of a dual-stream encoder: text-only layers, then vision-only
// layers, then cross-modal layers.
struct DualSplit {
  std::size_t text = 0;
  std::size_t vision = 0;
  std::size_t cross = 0;

  bool operator==(const DualSplit&) const = default;
};

struct EncoderConfig {
  std::size_t d = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t vocab_size = 0;
  std::size_t max_tokens = 16;
  std::size_t region_feature_dim = 0;
  StreamKind stream = StreamKind::Single;
  DualSplit split;

  // Throws InvalidArgument on the first violated invariant.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Number of geometry inputs appended to region features: x1 y1 x2 y2 w h area.
inline constexpr std::size_t kGeometryFeatures = 7;

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg);

struct Embeddings {
  Var tokens;   // [m, d]
  Var regions;  // [n, d]
};

// Per-layer node handles; index 0 is the embedding layer.
struct EncodedLayers {
  std::vector<Var> regions;
  std::vector<Var> tokens;
};

// Region and token representations at every layer 0..L.
struct LayerStack {
  Tensor region_reps;  // [L+1, n, d]
  Tensor token_reps;   // [L+1, m, d]

  std::size_t layer_count() const { return region_reps.dim(0); }
  std::size_t region_count() const { return region_reps.dim(1); }
  std::size_t width() const { return region_reps.dim(2); }
  // [n, d] slice of layer l.
  Tensor regions_at(std::size_t l) const;
  Tensor tokens_at(std::size_t l) const;

  // Builds a region-only stack from per-layer [n, d] tensors.
  static LayerStack from_region_layers(const std::vector<Tensor>& layers);
};

void validate_sample(const GroundingSample& sample, const EncoderConfig& cfg);

Embeddings embed(Graph& g, const ParamStore& params, const EncoderConfig& cfg, const GroundingSample& sample);
EncodedLayers encode(Graph& g, const ParamStore& params, const EncoderConfig& cfg, const GroundingSample& sample);

// Graph-free conveniences returning plain tensors.
std::pair<Tensor, Tensor> embed(const GroundingSample& sample, const EncoderConfig& cfg, const ParamStore& params);
LayerStack encode(const GroundingSample& sample, const EncoderConfig& cfg, const ParamStore& params);

}  // namespace layerfusion
