#include "layerfusion/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "layerfusion/errors.hpp"
#include "layerfusion/gradcheck.hpp"
#include "layerfusion/rng.hpp"

namespace layerfusion {

std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::size_t thread_count() {
  const char* env = std::getenv("THREADS");
  if (!env || !*env) return 1;
  std::size_t n = 0;
  const auto [p, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), n);
  if (ec != std::errc() || n == 0) return 1;
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ModelConfig resolve_model(const RunConfig& cfg, const DatasetHeader& header) {
  ModelConfig m = cfg.model;
  m.encoder.vocab_size = header.vocab.size();
  m.encoder.region_feature_dim = header.spec.feature_dim();
  m.encoder.validate();
  return m;
}

namespace {

void add_into(Gradients& acc, Gradients&& g) {
  if (acc.empty()) {
    acc = std::move(g);
    return;
  }
  for (auto& [name, t] : g) {
    Tensor& a = acc.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) a[i] += t[i];
  }
}

double mean_loss(const ParamStore& params, const ModelConfig& model, const Dataset& data) {
  std::vector<double> losses(data.samples.size());
  parallel_for(losses.size(), [&](std::size_t i) {
    Graph g;
    losses[i] = g.value(sample_loss(g, params, model, data.samples[i]))[0];
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

void check_headers(const DatasetHeader& a, const DatasetHeader& b, const std::string& what) {
  if (a.vocab != b.vocab || a.spec.feature_dim() != b.spec.feature_dim() || a.grammar_version != b.grammar_version)
    throw InvalidArgument(what + " dataset is incompatible with the training dataset (vocabulary, feature width or grammar)");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

constexpr std::uint64_t kShuffleStream = 0x5EED5EED5EED5EEDULL;

}  // namespace

TrainResult train_model(const RunConfig& cfg, const Dataset& train, const Dataset& val, std::ostream* log) {
  if (train.samples.empty()) throw InvalidArgument("training dataset is empty");
  if (val.samples.empty()) throw InvalidArgument("validation dataset is empty");
  check_headers(train.header, val.header, "validation");
  if (cfg.batch_size == 0) throw InvalidArgument("batch size must be positive");

  TrainResult r;
  r.model = resolve_model(cfg, train.header);
  r.params = init_model(r.model, cfg.seed);
  AdamState state;

  r.history.push_back({0, mean_loss(r.params, r.model, train), evaluate(r.params, r.model, val).iou05});
  if (log)
    *log << "epoch 0 loss " << format_double(r.history.back().train_loss) << " val_iou05 "
         << format_double(r.history.back().val_iou05) << '\n';

  const std::size_t n = train.samples.size();
  const std::size_t total_steps = cfg.epochs * ((n + cfg.batch_size - 1) / cfg.batch_size);
  AdamConfig optim = cfg.optim;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed ^ kShuffleStream, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      Gradients acc;
      for (std::size_t k = start; k < stop; ++k) {
        Graph g;
        const Var loss = sample_loss(g, r.params, r.model, train.samples[order[k]]);
        epoch_loss += g.value(loss)[0];
        add_into(acc, g.backward(loss));
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& [name, t] : acc)
        for (auto& v : t.data()) v *= inv;
      optim.lr = scheduled_lr(cfg.optim.lr, cfg.schedule, r.steps, total_steps, cfg.warmup_steps);
      adam_step(r.params, acc, state, optim);
      ++r.steps;
    }
    r.history.push_back({epoch, epoch_loss / static_cast<double>(n), evaluate(r.params, r.model, val).iou05});
    if (log)
      *log << "epoch " << epoch << " loss " << format_double(r.history.back().train_loss) << " val_iou05 "
           << format_double(r.history.back().val_iou05) << '\n';
  }
  return r;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string s = "epoch,train_loss,val_iou05\n";
  for (const auto& m : history)
    s += std::to_string(m.epoch) + ',' + format_double(m.train_loss) + ',' + format_double(m.val_iou05) + '\n';
  return s;
}

EvalResult evaluate(const ParamStore& params, const ModelConfig& model, const Dataset& data) {
  if (data.samples.empty()) throw InvalidArgument("cannot evaluate on an empty dataset");
  EvalResult r;
  r.rows.resize(data.samples.size());
  parallel_for(data.samples.size(), [&](std::size_t i) {
    const auto& s = data.samples[i];
    const Prediction p = predict(params, model, s);
    EvalRow& row = r.rows[i];
    row.id = s.id;
    row.predicted_index = p.index;
    row.predicted_box = s.regions[p.index].box;
    row.iou = iou(row.predicted_box, s.target_box());
    row.correct = row.iou > 0.5;
  });
  std::size_t correct = 0;
  for (const auto& row : r.rows) correct += row.correct ? 1 : 0;
  r.iou05 = static_cast<double>(correct) / static_cast<double>(r.rows.size());
  return r;
}

std::string eval_csv(const EvalResult& result) {
  std::string s = "id,predicted_index,pred_x1,pred_y1,pred_x2,pred_y2,iou,correct\n";
  for (const auto& r : result.rows) {
    s += std::to_string(r.id) + ',' + std::to_string(r.predicted_index) + ',' + format_double(r.predicted_box.x1) + ',' +
         format_double(r.predicted_box.y1) + ',' + format_double(r.predicted_box.x2) + ',' +
         format_double(r.predicted_box.y2) + ',' + format_double(r.iou) + ',' + (r.correct ? "1" : "0") + '\n';
  }
  return s;
}

void check_compatible(const CheckpointMetadata& meta, const DatasetHeader& header) {
  const auto& e = meta.model.encoder;
  if (e.vocab_size != header.vocab.size() || e.region_feature_dim != header.spec.feature_dim() ||
      meta.grammar_version != header.grammar_version)
    throw InvalidArgument("checkpoint (vocab_size=" + std::to_string(e.vocab_size) +
                          ", feature_dim=" + std::to_string(e.region_feature_dim) +
                          ", grammar_version=" + std::to_string(meta.grammar_version) +
                          ") is incompatible with dataset (vocab_size=" + std::to_string(header.vocab.size()) +
                          ", feature_dim=" + std::to_string(header.spec.feature_dim()) +
                          ", grammar_version=" + std::to_string(header.grammar_version) + ")");
}

TrainResult run_train(const RunConfig& cfg, std::ostream& log) {
  validate_structure(cfg);
  if (cfg.train_data.empty() || cfg.val_data.empty()) throw InvalidArgument("config needs data.train and data.val");
  const Dataset train = load_dataset(cfg.train_data);
  const Dataset val = load_dataset(cfg.val_data);
  TrainResult r = train_model(cfg, train, val, &log);
  const std::filesystem::path out(cfg.out_dir);
  CheckpointMetadata meta{r.model, cfg.seed, r.steps, train.header.grammar_version};
  save_checkpoint(r.params, meta, out / "checkpoint.lfck");
  write_text(out / "metrics.csv", metrics_csv(r.history));
  log << "final val_iou05 " << format_double(r.history.back().val_iou05) << "; wrote " << (out / "checkpoint.lfck").string()
      << " and " << (out / "metrics.csv").string() << '\n';
  return r;
}

EvalResult run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                    const std::filesystem::path& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = load_dataset(data);
  check_compatible(ck.metadata, ds.header);
  EvalResult r = evaluate(ck.params, ck.metadata.model, ds);
  write_text(out, eval_csv(r));
  return r;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

CompareResult summarize(std::vector<CompareRow> rows) {
  CompareResult r;
  r.rows = std::move(rows);
  for (const auto& row : r.rows) {
    auto it = std::find_if(r.summary.begin(), r.summary.end(), [&](const CompareSummary& s) { return s.kind == row.kind; });
    if (it != r.summary.end()) continue;
    std::vector<double> val, test;
    bool has_test = true;
    for (const auto& x : r.rows)
      if (x.kind == row.kind) {
        val.push_back(x.val_iou05);
        test.push_back(x.test_iou05);
        has_test = has_test && x.has_test;
      }
    CompareSummary s;
    s.kind = row.kind;
    std::tie(s.val_mean, s.val_std) = mean_std(val);
    std::tie(s.test_mean, s.test_std) = mean_std(test);
    s.has_test = has_test;
    s.extra_params = row.extra_params;
    r.summary.push_back(s);
  }
  return r;
}

CompareResult run_compare(const RunConfig& base, const std::vector<FusionKind>& kinds,
                          const std::vector<std::uint64_t>& seeds, std::ostream* log) {
  if (kinds.empty() || seeds.empty()) throw InvalidArgument("compare needs at least one kind and one seed");
  validate_structure(base);
  const Dataset train = load_dataset(base.train_data);
  const Dataset val = load_dataset(base.val_data);
  const bool has_test = !base.test_data.empty();
  const Dataset test = has_test ? load_dataset(base.test_data) : Dataset{};
  if (has_test) check_headers(train.header, test.header, "test");

  std::vector<CompareRow> rows(kinds.size() * seeds.size());
  std::mutex log_mutex;
  parallel_for(rows.size(), [&](std::size_t job) {
    const FusionKind kind = kinds[job / seeds.size()];
    const std::uint64_t seed = seeds[job % seeds.size()];
    RunConfig cfg = base;
    cfg.model.fusion = kind;
    cfg.seed = seed;
    try {
      const TrainResult tr = train_model(cfg, train, val);
      CompareRow& row = rows[job];
      row.kind = kind;
      row.seed = seed;
      row.val_iou05 = tr.history.back().val_iou05;
      row.has_test = has_test;
      if (has_test) row.test_iou05 = evaluate(tr.params, tr.model, test).iou05;
      row.extra_params = param_count(kind, tr.model.encoder.d, tr.model.encoder.layers);
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << to_string(kind) << " seed " << seed << " val_iou05 " << format_double(row.val_iou05);
        if (has_test) *log << " test_iou05 " << format_double(row.test_iou05);
        *log << '\n';
      }
    } catch (const std::exception& e) {
      throw Error("compare: run of " + std::string(to_string(kind)) + " (seed " + std::to_string(seed) +
                  ") failed: " + e.what());
    }
  });
  return summarize(std::move(rows));
}

std::string compare_csv(const CompareResult& result) {
  std::string s = "kind,seed,val_iou05,test_iou05,extra_params\n";
  auto test = [](bool has, double v) { return has ? format_double(v) : std::string("NA"); };
  for (const auto& r : result.rows)
    s += std::string(to_string(r.kind)) + ',' + std::to_string(r.seed) + ',' + format_double(r.val_iou05) + ',' +
         test(r.has_test, r.test_iou05) + ',' + std::to_string(r.extra_params) + '\n';
  for (const auto& m : result.summary) {
    const std::string k(to_string(m.kind));
    s += k + ",mean," + format_double(m.val_mean) + ',' + test(m.has_test, m.test_mean) + ',' +
         std::to_string(m.extra_params) + '\n';
    s += k + ",std," + format_double(m.val_std) + ',' + test(m.has_test, m.test_std) + ',' +
         std::to_string(m.extra_params) + '\n';
  }
  return s;
}

GroundingSample random_sample(std::size_t regions, std::size_t tokens, std::size_t vocab, std::size_t feature_dim,
                              std::uint64_t seed) {
  Rng rng(seed);
  GroundingSample s;
  s.id = seed;
  s.seed = seed;
  for (std::size_t i = 0; i < regions; ++i) {
    const double w = rng.uniform(0.1, 0.4), h = rng.uniform(0.1, 0.4);
    const double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
    RegionProposal r{{x, y, x + w, y + h}, std::vector<double>(feature_dim)};
    for (auto& f : r.features) f = rng.normal();
    s.regions.push_back(std::move(r));
  }
  for (std::size_t t = 0; t < tokens; ++t) s.tokens.push_back(rng.below(vocab));
  s.target_index = rng.below(regions);
  return s;
}

void GradCheckConfig::validate() const {
  if (d > 32 || layers > 3 || regions > 4)
    throw InvalidArgument("gradcheck runs on small configs only (d <= 32, L <= 3, n <= 4)");
  if (layers == 0 || regions == 0 || tokens == 0 || heads == 0 || d % heads != 0)
    throw InvalidArgument("gradcheck config has an empty or indivisible dimension");
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& r : rows) w = std::max(w, r.max_rel_error);
  return w;
}

namespace {

constexpr std::size_t kVocab = 12;
constexpr std::size_t kFeatures = 6;
constexpr std::size_t kEncoderCoordsPerTensor = 8;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Loss sum(op(inputs) * R) with fixed random R.
GradCheckRow check_op(const std::string& name, std::vector<std::pair<std::string, Tensor>> inputs,
                      const std::function<Var(Graph&, const std::vector<Var>&)>& op, double eps, Rng& rng) {
  ParamStore store;
  std::vector<std::string> names;
  for (auto& [n, t] : inputs) {
    names.push_back(n);
    store.add(n, std::move(t));
  }
  Tensor probe;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& n : names) vars.push_back(g.param(store, n));
    probe = random_tensor(g.value(op(g, vars)).shape(), rng);
  }
  const LossBuilder build = [&](Graph& g, const ParamStore& p) {
    std::vector<Var> vars;
    for (const auto& n : names) vars.push_back(g.param(p, n));
    const Var out = op(g, vars);
    if (g.value(out).size() == 1) return out;
    return g.sum(g.mul(out, g.constant(probe)));
  };
  const GradCheckResult r = grad_check(store, build, names, eps);
  return {"op/" + name, r.max_rel_error, r.coordinates, r.worst_parameter};
}

std::vector<GradCheckRow> op_checks(double eps, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckRow> rows;
  auto T = [&](Shape s) { return random_tensor(std::move(s), rng); };
  rows.push_back(check_op("matmul", {{"a", T({3, 4})}, {"b", T({4, 2})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.matmul(v[0], v[1]); }, eps, rng));
  rows.push_back(check_op("add", {{"a", T({3, 4})}, {"b", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); }, eps, rng));
  rows.push_back(check_op("add_row_bias", {{"a", T({3, 4})}, {"b", T({4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.add_row_bias(v[0], v[1]); }, eps, rng));
  rows.push_back(check_op("scale", {{"a", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.scale(v[0], -1.7); }, eps, rng));
  rows.push_back(check_op("mul", {{"a", T({3, 4})}, {"b", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.mul(v[0], v[1]); }, eps, rng));
  rows.push_back(check_op("gelu", {{"a", T({3, 4})}}, [](Graph& g, const std::vector<Var>& v) { return g.gelu(v[0]); },
                          eps, rng));
  rows.push_back(check_op("sigmoid", {{"a", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.sigmoid(v[0]); }, eps, rng));
  rows.push_back(check_op("softmax_rows", {{"a", T({3, 5})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.softmax_rows(v[0]); }, eps, rng));
  rows.push_back(check_op("layer_norm", {{"a", T({3, 6})}, {"gain", T({6})}, {"bias", T({6})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.layer_norm(v[0], v[1], v[2]); }, eps, rng));
  rows.push_back(check_op("mean_rows", {{"a", T({4, 3})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.mean_rows(v[0]); }, eps, rng));
  rows.push_back(check_op("repeat_rows", {{"a", T({1, 3})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.repeat_rows(v[0], 4); }, eps, rng));
  rows.push_back(check_op("concat_rows", {{"a", T({2, 3})}, {"b", T({3, 3})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.concat_rows(v); }, eps, rng));
  rows.push_back(check_op("concat_cols", {{"a", T({3, 2})}, {"b", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.concat_cols(v); }, eps, rng));
  rows.push_back(check_op("slice_rows", {{"a", T({5, 3})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.slice_rows(v[0], 1, 3); }, eps, rng));
  rows.push_back(check_op("transpose", {{"a", T({3, 5})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.transpose(v[0]); }, eps, rng));
  rows.push_back(check_op("reshape", {{"a", T({6})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.reshape(v[0], {2, 3}); }, eps, rng));
  rows.push_back(check_op("gather", {{"a", T({5, 3})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.gather(v[0], {4, 0, 4, 2}); }, eps, rng));
  rows.push_back(check_op("layer_mix", {{"w", T({3, 3})}, {"h0", T({3, 4})}, {"h1", T({3, 4})}, {"h2", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) {
                            const Var layers[] = {v[1], v[2], v[3]};
                            return g.layer_mix(g.softmax_rows(v[0]), layers);
                          },
                          eps, rng));
  rows.push_back(check_op("row_dot", {{"a", T({3, 4})}, {"b", T({3, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.row_dot(v[0], v[1]); }, eps, rng));
  rows.push_back(check_op("attention", {{"q", T({3, 4})}, {"k", T({5, 4})}, {"v", T({5, 4})}},
                          [](Graph& g, const std::vector<Var>& v) { return g.attention(v[0], v[1], v[2], 2); }, eps, rng));
  rows.push_back(check_op("sum", {{"a", T({3, 4})}}, [](Graph& g, const std::vector<Var>& v) { return g.sum(v[0]); },
                          eps, rng));
  Tensor targets({4});
  for (auto& t : targets.data()) t = rng.uniform();
  rows.push_back(check_op("bce_with_logits", {{"z", T({4, 1})}},
                          [targets](Graph& g, const std::vector<Var>& v) { return g.bce_with_logits(v[0], targets); },
                          eps, rng));
  return rows;
}

ModelConfig small_model(const GradCheckConfig& cfg, StreamKind stream, FusionKind kind) {
  ModelConfig m;
  auto& e = m.encoder;
  e.d = cfg.d;
  e.layers = cfg.layers;
  e.heads = cfg.heads;
  e.ffn_mult = 4;
  e.vocab_size = kVocab;
  e.max_tokens = std::max<std::size_t>(cfg.tokens, 8);
  e.region_feature_dim = kFeatures;
  e.stream = stream;
  e.split = cfg.dual_split;
  m.fusion = kind;
  return m;
}

// Perturbs parameters away from their initial values so zero-initialized
// entries (biases, static fusion scores) are checked at generic points.
void jitter(ParamStore& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : p.entries())
    for (auto& v : t.data()) v += 0.1 * rng.normal();
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  cfg.validate();
  GradCheckReport report;
  report.rows = op_checks(cfg.epsilon, cfg.seed);
  const GroundingSample sample = random_sample(cfg.regions, cfg.tokens, kVocab, kFeatures, cfg.seed);

  {
    Rng rng(cfg.seed + 1);
    ParamStore store;
    store.add("fused", random_tensor({cfg.regions, cfg.d}, rng));
    for (auto& s : head_param_specs(cfg.d)) store.add(s.name, random_tensor(s.shape, rng));
    const auto targets = Tensor::vector(iou_targets(sample));
    const LossBuilder build = [&](Graph& g, const ParamStore& p) {
      return g.bce_with_logits(head_logits(g, p, g.param(p, "fused")), targets);
    };
    const auto r = grad_check(store, build, all_names(store), cfg.epsilon);
    report.rows.push_back({"head", r.max_rel_error, r.coordinates, r.worst_parameter});
  }

  for (StreamKind stream : {StreamKind::Single, StreamKind::Dual}) {
    const ModelConfig m = small_model(cfg, stream, FusionKind::TopLayer);
    ParamStore params = init_model(m, cfg.seed);
    jitter(params, cfg.seed + 2);
    Rng rng(cfg.seed + 3);
    const Tensor probe_regions = random_tensor({cfg.regions, cfg.d}, rng);
    const Tensor probe_tokens = random_tensor({cfg.tokens, cfg.d}, rng);
    const LossBuilder build = [&](Graph& g, const ParamStore& p) {
      const EncodedLayers enc = encode(g, p, m.encoder, sample);
      const Var a = g.sum(g.mul(enc.regions.back(), g.constant(probe_regions)));
      const Var b = g.sum(g.mul(enc.tokens.back(), g.constant(probe_tokens)));
      return g.add(a, b);
    };
    std::vector<std::string> names;
    for (const auto& s : encoder_param_specs(m.encoder)) names.push_back(s.name);
    const auto r = grad_check(params, build, names, cfg.epsilon, cfg.max_coords_per_param);
    report.rows.push_back({"encoder/" + std::string(to_string(stream)), r.max_rel_error, r.coordinates, r.worst_parameter});
  }

  for (FusionKind kind : kAllFusionKinds) {
    GradCheckRow row{"fusion/" + std::string(to_string(kind)), 0.0, 0, ""};
    for (StreamKind stream : {StreamKind::Single, StreamKind::Dual}) {
      const ModelConfig m = small_model(cfg, stream, kind);
      ParamStore params = init_model(m, cfg.seed);
      jitter(params, cfg.seed + 4);
      const LossBuilder build = [&](Graph& g, const ParamStore& p) { return sample_loss(g, p, m, sample); };
      // The encoder rows cover every encoder coordinate; here a strided
      // subset of them confirms gradients still reach the encoder end to end.
      std::vector<std::string> head_side, encoder_side;
      for (const auto& name : all_names(params)) (name.rfind("encoder.", 0) == 0 ? encoder_side : head_side).push_back(name);
      const std::size_t encoder_cap =
          cfg.max_coords_per_param == 0 ? kEncoderCoordsPerTensor : std::min(cfg.max_coords_per_param, kEncoderCoordsPerTensor);
      const auto r = grad_check(params, build, head_side, cfg.epsilon, cfg.max_coords_per_param);
      const auto e = grad_check(params, build, encoder_side, cfg.epsilon, encoder_cap);
      row.max_rel_error = std::max({row.max_rel_error, r.max_rel_error, e.max_rel_error});
      row.coordinates += r.coordinates + e.coordinates;
      if (!row.detail.empty()) row.detail += ' ';
      row.detail += std::string(to_string(stream)) + '=' + format_double(std::max(r.max_rel_error, e.max_rel_error));
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace layerfusion
