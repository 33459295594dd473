#include "layerfusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "layerfusion/errors.hpp"

namespace layerfusion {
namespace {

using nlohmann::json;

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::string& buffer() const { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string buf) : buf_(std::move(buf)) {}
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(le(8, what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n)
      throw FormatError(std::string("corrupt checkpoint: truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
  }
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

json metadata_to_json(const CheckpointMetadata& m) {
  const auto& e = m.model.encoder;
  return {{"encoder",
           {{"d", e.d},
            {"layers", e.layers},
            {"heads", e.heads},
            {"ffn_mult", e.ffn_mult},
            {"vocab_size", e.vocab_size},
            {"max_tokens", e.max_tokens},
            {"region_feature_dim", e.region_feature_dim},
            {"stream", std::string(to_string(e.stream))},
            {"dual_split", {e.split.text, e.split.vision, e.split.cross}}}},
          {"fusion", std::string(to_string(m.model.fusion))},
          {"routing_iterations", m.model.fusion_options.routing_iterations},
          {"seed", m.seed},
          {"step", m.step},
          {"grammar_version", m.grammar_version}};
}

CheckpointMetadata metadata_from_json(const json& j) {
  CheckpointMetadata m;
  const auto& e = j.at("encoder");
  auto& c = m.model.encoder;
  c.d = e.at("d").get<std::size_t>();
  c.layers = e.at("layers").get<std::size_t>();
  c.heads = e.at("heads").get<std::size_t>();
  c.ffn_mult = e.at("ffn_mult").get<std::size_t>();
  c.vocab_size = e.at("vocab_size").get<std::size_t>();
  c.max_tokens = e.at("max_tokens").get<std::size_t>();
  c.region_feature_dim = e.at("region_feature_dim").get<std::size_t>();
  c.stream = parse_stream_kind(e.at("stream").get<std::string>());
  const auto split = e.at("dual_split").get<std::vector<std::size_t>>();
  if (split.size() != 3) throw FormatError("checkpoint metadata: dual_split needs 3 entries");
  c.split = {split[0], split[1], split[2]};
  m.model.fusion = parse_fusion_kind(j.at("fusion").get<std::string>());
  m.model.fusion_options.routing_iterations = j.at("routing_iterations").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.step = j.at("step").get<std::uint64_t>();
  m.grammar_version = j.at("grammar_version").get<std::uint32_t>();
  return m;
}

std::string printable(const std::string& bytes) {
  std::string hex, text;
  for (unsigned char c : bytes) {
    char buf[4];
    std::snprintf(buf, sizeof buf, "%02X", c);
    if (!hex.empty()) hex += ' ';
    hex += buf;
    text += (c >= 0x20 && c < 0x7F) ? static_cast<char>(c) : '?';
  }
  return "'" + text + "' (" + hex + ")";
}

}  // namespace

void save_checkpoint(const ParamStore& params, const CheckpointMetadata& metadata, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  json meta = metadata_to_json(metadata);
  meta["param_seed"] = params.rng_seed();
  const std::string blob = meta.dump();
  w.u64(blob.size());
  w.bytes(blob.data(), blob.size());
  w.u64(params.size());
  for (const auto& [name, t] : params.entries()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) w.u64(dim);
    for (double v : t.data()) w.f64(v);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  const std::string magic = r.remaining() >= 4 ? r.bytes(4, "magic") : r.bytes(r.remaining(), "magic");
  if (magic.size() < 4 || std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("not a checkpoint: found magic " + printable(magic) + ", expected 'LFCK'");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const std::uint64_t meta_len = r.u64("metadata length");
  if (meta_len > r.remaining()) throw FormatError("corrupt checkpoint: truncated metadata");
  try {
    const json meta = json::parse(r.bytes(meta_len, "metadata"));
    ck.metadata = metadata_from_json(meta);
    ck.params.set_rng_seed(meta.at("param_seed").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint metadata: ") + e.what());
  }

  const std::uint64_t count = r.u64("entry count");
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name = r.bytes(name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw FormatError("corrupt checkpoint: entry '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(r.u64("dimension"));
      if (shape.back() == 0 || shape.back() > r.remaining()) throw FormatError("corrupt checkpoint: bad dimension in '" + name + "'");
      elements *= shape.back();
      if (elements > r.remaining() / 8) throw FormatError("corrupt checkpoint: truncated values of '" + name + "'");
    }
    std::vector<double> data(elements);
    for (auto& v : data) v = r.f64("values");
    try {
      ck.params.add(name, Tensor(std::move(shape), std::move(data)));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("corrupt checkpoint: ") + e.what());
    }
  }
  if (r.remaining() != 0) throw FormatError("corrupt checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return ck;
}

}  // namespace layerfusion
