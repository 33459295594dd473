#include "layerfusion/encoder.hpp"

#include <cstdio>
#include <optional>
#include <string>

#include "layerfusion/errors.hpp"

namespace layerfusion {

std::string_view to_string(StreamKind kind) { return kind == StreamKind::Single ? "single" : "dual"; }

StreamKind parse_stream_kind(std::string_view name) {
  if (name == "single") return StreamKind::Single;
  if (name == "dual") return StreamKind::Dual;
  throw InvalidArgument("unknown stream kind '" + std::string(name) + "' (expected single or dual)");
}

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw InvalidArgument(std::string("encoder config: ") + what + " must be positive");
  };
  positive(d, "d");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(ffn_mult, "ffn_mult");
  positive(vocab_size, "vocab_size");
  positive(max_tokens, "max_tokens");
  positive(region_feature_dim, "region_feature_dim");
  if (d % heads != 0)
    throw InvalidArgument("encoder config: d=" + std::to_string(d) + " is not divisible by heads=" + std::to_string(heads));
  if (stream == StreamKind::Dual) {
    if (split.text + split.vision + split.cross != layers)
      throw InvalidArgument("encoder config: dual split " + std::to_string(split.text) + "+" + std::to_string(split.vision) +
                            "+" + std::to_string(split.cross) + " does not sum to layers=" + std::to_string(layers));
    if (split.cross == 0) throw InvalidArgument("encoder config: dual stream needs at least one cross layer");
  }
}

namespace {

std::string indexed(const std::string& prefix, std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return prefix + buf;
}

void add_linear(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t in, std::size_t out) {
  specs.push_back({prefix + ".weight", {in, out}, InitScheme::GlorotUniform});
  specs.push_back({prefix + ".bias", {out}, InitScheme::Zeros});
}

void add_norm(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t d) {
  specs.push_back({prefix + ".gain", {d}, InitScheme::Ones});
  specs.push_back({prefix + ".bias", {d}, InitScheme::Zeros});
}

void add_block(std::vector<ParamSpec>& specs, const std::string& prefix, const EncoderConfig& cfg) {
  const std::size_t d = cfg.d;
  add_norm(specs, prefix + ".attn_norm", d);
  for (const char* p : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) add_linear(specs, prefix + p, d, d);
  add_norm(specs, prefix + ".ffn_norm", d);
  add_linear(specs, prefix + ".ffn.in", d, cfg.ffn_mult * d);
  add_linear(specs, prefix + ".ffn.out", cfg.ffn_mult * d, d);
}

Var linear(Graph& g, const ParamStore& params, const std::string& prefix, Var x) {
  return g.add_row_bias(g.matmul(x, g.param(params, prefix + ".weight")), g.param(params, prefix + ".bias"));
}

Var norm(Graph& g, const ParamStore& params, const std::string& prefix, Var x) {
  return g.layer_norm(x, g.param(params, prefix + ".gain"), g.param(params, prefix + ".bias"));
}

// Pre-norm transformer block. Without `context` it is plain self-attention;
// with it, queries come from x and keys/values from the context rows.
Var block(Graph& g, const ParamStore& params, const std::string& prefix, std::size_t heads, Var x,
          std::optional<Var> context = std::nullopt) {
  const Var nq = norm(g, params, prefix + ".attn_norm", x);
  const Var nc = context ? norm(g, params, prefix + ".attn_norm", *context) : nq;
  const Var q = linear(g, params, prefix + ".attn.q", nq);
  const Var k = linear(g, params, prefix + ".attn.k", nc);
  const Var v = linear(g, params, prefix + ".attn.v", nc);
  const Var attended = linear(g, params, prefix + ".attn.o", g.attention(q, k, v, heads));
  x = g.add(x, attended);
  Var h = norm(g, params, prefix + ".ffn_norm", x);
  h = g.gelu(linear(g, params, prefix + ".ffn.in", h));
  h = linear(g, params, prefix + ".ffn.out", h);
  return g.add(x, h);
}

Tensor region_inputs(const GroundingSample& sample, std::size_t feature_dim) {
  const std::size_t n = sample.regions.size();
  Tensor x({n, feature_dim + kGeometryFeatures});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = sample.regions[i];
    auto row = x.row(i);
    std::copy(r.features.begin(), r.features.end(), row.begin());
    const Box& b = r.box;
    const double geom[kGeometryFeatures] = {b.x1, b.y1, b.x2, b.y2, b.width(), b.height(), b.area()};
    std::copy(std::begin(geom), std::end(geom), row.begin() + static_cast<std::ptrdiff_t>(feature_dim));
  }
  return x;
}

}  // namespace

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  specs.push_back({"encoder.embed.token", {cfg.vocab_size, cfg.d}, InitScheme::GlorotUniform});
  specs.push_back({"encoder.embed.position", {cfg.max_tokens, cfg.d}, InitScheme::GlorotUniform});
  add_linear(specs, "encoder.embed.region", cfg.region_feature_dim + kGeometryFeatures, cfg.d);
  add_norm(specs, "encoder.embed.text_norm", cfg.d);
  add_norm(specs, "encoder.embed.region_norm", cfg.d);
  if (cfg.stream == StreamKind::Single) {
    for (std::size_t l = 1; l <= cfg.layers; ++l) add_block(specs, indexed("encoder.layer", l), cfg);
  } else {
    for (std::size_t l = 1; l <= cfg.split.text; ++l) add_block(specs, indexed("encoder.text", l), cfg);
    for (std::size_t l = 1; l <= cfg.split.vision; ++l) add_block(specs, indexed("encoder.vision", l), cfg);
    for (std::size_t l = 1; l <= cfg.split.cross; ++l) {
      add_block(specs, indexed("encoder.cross", l) + ".text", cfg);
      add_block(specs, indexed("encoder.cross", l) + ".vision", cfg);
    }
  }
  return specs;
}

Tensor LayerStack::regions_at(std::size_t l) const {
  const std::size_t n = region_count(), d = width();
  Tensor out({n, d});
  std::copy_n(region_reps.data().begin() + static_cast<std::ptrdiff_t>(l * n * d), n * d, out.data().begin());
  return out;
}

Tensor LayerStack::tokens_at(std::size_t l) const {
  const std::size_t m = token_reps.dim(1), d = token_reps.dim(2);
  Tensor out({m, d});
  std::copy_n(token_reps.data().begin() + static_cast<std::ptrdiff_t>(l * m * d), m * d, out.data().begin());
  return out;
}

LayerStack LayerStack::from_region_layers(const std::vector<Tensor>& layers) {
  if (layers.empty()) throw ShapeError("layer stack needs at least one layer");
  const std::size_t n = layers[0].rows(), d = layers[0].cols();
  LayerStack s;
  s.region_reps = Tensor({layers.size(), n, d});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].rows() != n || layers[l].cols() != d) throw ShapeError("layer stack: inconsistent layer shapes");
    std::copy(layers[l].data().begin(), layers[l].data().end(),
              s.region_reps.data().begin() + static_cast<std::ptrdiff_t>(l * n * d));
  }
  s.token_reps = Tensor({layers.size(), 1, d});
  return s;
}

void validate_sample(const GroundingSample& sample, const EncoderConfig& cfg) {
  if (sample.regions.empty()) throw InvalidArgument("sample " + std::to_string(sample.id) + " has no regions");
  if (sample.tokens.empty() || sample.tokens.size() > cfg.max_tokens)
    throw InvalidArgument("sample " + std::to_string(sample.id) + " has " + std::to_string(sample.tokens.size()) +
                          " tokens; expected 1.." + std::to_string(cfg.max_tokens));
  for (auto t : sample.tokens)
    if (t >= cfg.vocab_size)
      throw InvalidArgument("token id " + std::to_string(t) + " out of range [0, " + std::to_string(cfg.vocab_size) + ")");
  for (const auto& r : sample.regions) {
    if (r.features.size() != cfg.region_feature_dim)
      throw InvalidArgument("region feature length " + std::to_string(r.features.size()) + " does not match " +
                            std::to_string(cfg.region_feature_dim));
    validate(r.box);
  }
  if (sample.target_index >= sample.regions.size()) throw InvalidArgument("target index out of range");
}

Embeddings embed(Graph& g, const ParamStore& params, const EncoderConfig& cfg, const GroundingSample& sample) {
  validate_sample(sample, cfg);
  const std::size_t m = sample.tokens.size();
  std::vector<std::size_t> positions(m);
  for (std::size_t i = 0; i < m; ++i) positions[i] = i;
  Var tokens = g.add(g.gather(g.param(params, "encoder.embed.token"), sample.tokens),
                     g.gather(g.param(params, "encoder.embed.position"), positions));
  tokens = norm(g, params, "encoder.embed.text_norm", tokens);
  Var regions = linear(g, params, "encoder.embed.region", g.constant(region_inputs(sample, cfg.region_feature_dim)));
  regions = norm(g, params, "encoder.embed.region_norm", regions);
  return {tokens, regions};
}

EncodedLayers encode(Graph& g, const ParamStore& params, const EncoderConfig& cfg, const GroundingSample& sample) {
  cfg.validate();
  const Embeddings e = embed(g, params, cfg, sample);
  EncodedLayers out;
  out.tokens.push_back(e.tokens);
  out.regions.push_back(e.regions);
  const std::size_t m = sample.tokens.size(), n = sample.regions.size();

  if (cfg.stream == StreamKind::Single) {
    const Var parts[] = {e.tokens, e.regions};
    Var x = g.concat_rows(parts);
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      x = block(g, params, indexed("encoder.layer", l), cfg.heads, x);
      out.tokens.push_back(g.slice_rows(x, 0, m));
      out.regions.push_back(g.slice_rows(x, m, n));
    }
    return out;
  }

  Var t = e.tokens;
  Var v = e.regions;
  for (std::size_t l = 1; l <= cfg.split.text; ++l) {
    t = block(g, params, indexed("encoder.text", l), cfg.heads, t);
    out.tokens.push_back(t);
    out.regions.push_back(v);
  }
  for (std::size_t l = 1; l <= cfg.split.vision; ++l) {
    v = block(g, params, indexed("encoder.vision", l), cfg.heads, v);
    out.tokens.push_back(t);
    out.regions.push_back(v);
  }
  for (std::size_t l = 1; l <= cfg.split.cross; ++l) {
    const Var parts[] = {t, v};
    const Var both = g.concat_rows(parts);
    const std::string prefix = indexed("encoder.cross", l);
    const Var t_next = block(g, params, prefix + ".text", cfg.heads, t, both);
    v = block(g, params, prefix + ".vision", cfg.heads, v, both);
    t = t_next;
    out.tokens.push_back(t);
    out.regions.push_back(v);
  }
  return out;
}

namespace {

Tensor stack_values(const Graph& g, const std::vector<Var>& layers) {
  const Tensor& first = g.value(layers[0]);
  Tensor out({layers.size(), first.rows(), first.cols()});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& t = g.value(layers[l]);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(l * t.size()));
  }
  return out;
}

}  // namespace

std::pair<Tensor, Tensor> embed(const GroundingSample& sample, const EncoderConfig& cfg, const ParamStore& params) {
  Graph g;
  const Embeddings e = embed(g, params, cfg, sample);
  return {g.value(e.regions), g.value(e.tokens)};
}

LayerStack encode(const GroundingSample& sample, const EncoderConfig& cfg, const ParamStore& params) {
  Graph g;
  const EncodedLayers layers = encode(g, params, cfg, sample);
  return {stack_values(g, layers.regions), stack_values(g, layers.tokens)};
}

}  // namespace layerfusion
