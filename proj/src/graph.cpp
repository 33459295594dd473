#include "layerfusion/graph.hpp"

#include <algorithm>
#include <cmath>

#include "layerfusion/errors.hpp"

namespace layerfusion {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void axpy(double s, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

void accumulate(const Tensor& src, Tensor& dst) {
  auto s = src.data();
  auto d = dst.data();
  for (std::size_t i = 0; i < s.size(); ++i) d[i] += s[i];
}

}  // namespace

const Tensor& Graph::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

const Tensor& Graph::value(Var v) const {
  if (v.id >= nodes_.size()) throw InvalidArgument("variable does not belong to this graph");
  return val(v.id);
}

Var Graph::push(Op op, std::vector<std::size_t> in, Tensor value) {
  for (auto i : in)
    if (i >= nodes_.size()) throw InvalidArgument("variable does not belong to this graph");
  Node n;
  n.op = op;
  n.requires_grad = std::any_of(in.begin(), in.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.in = std::move(in);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::param(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) {
    if (nodes_[it->second].ref != &value)
      throw InvalidArgument("parameter '" + name + "' bound twice to different tensors");
    return Var{it->second};
  }
  Node n;
  n.op = Op::Param;
  n.ref = &value;
  n.requires_grad = true;
  n.name = name;
  nodes_.push_back(std::move(n));
  params_.emplace(name, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) { return push(Op::Constant, {}, std::move(value)); }

Var Graph::external(Tensor value, std::vector<Var> inputs) {
  std::vector<std::size_t> in;
  for (auto v : inputs) in.push_back(v.id);
  return push(Op::External, std::move(in), std::move(value));
}

Var Graph::matmul(Var a, Var b) {
  return push(Op::MatMul, {a.id, b.id}, layerfusion::matmul(value(a), value(b)));
}

Var Graph::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape(x, y, "add");
  Tensor out = x;
  accumulate(y, out);
  return push(Op::Add, {a.id, b.id}, std::move(out));
}

Var Graph::add_row_bias(Var x, Var bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (bv.size() != xv.cols())
    throw ShapeError("add_row_bias: bias " + shape_string(bv.shape()) + " vs input " + shape_string(xv.shape()));
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return push(Op::AddRowBias, {x.id, bias.id}, std::move(out));
}

Var Graph::scale(Var x, double s) {
  Tensor out = value(x);
  for (auto& v : out.data()) v *= s;
  Var r = push(Op::Scale, {x.id}, std::move(out));
  nodes_[r.id].scalar = s;
  return r;
}

Var Graph::mul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return push(Op::Mul, {a.id, b.id}, std::move(out));
}

Var Graph::gelu(Var x) {
  Tensor out = value(x);
  for (auto& v : out.data()) v = layerfusion::gelu(v);
  return push(Op::Gelu, {x.id}, std::move(out));
}

Var Graph::sigmoid(Var x) { return push(Op::Sigmoid, {x.id}, layerfusion::sigmoid(value(x))); }

Var Graph::softmax_rows(Var x) { return push(Op::SoftmaxRows, {x.id}, layerfusion::softmax_rows(value(x))); }

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = value(x);
  const Tensor& g = value(gamma);
  const Tensor& b = value(beta);
  const std::size_t r = xv.rows(), c = xv.cols();
  if (g.size() != c || b.size() != c) throw ShapeError("layer_norm: gain/bias size must equal row width");
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  Tensor inv({r});
  for (std::size_t i = 0; i < r; ++i) {
    auto row = xv.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv[i] = is;
    auto xh = xhat.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      xh[j] = (row[j] - mean) * is;
      o[j] = xh[j] * g[j] + b[j];
    }
  }
  Var res = push(Op::LayerNorm, {x.id, gamma.id, beta.id}, std::move(out));
  nodes_[res.id].aux = std::move(xhat);
  nodes_[res.id].aux2 = std::move(inv);
  return res;
}

Var Graph::mean_rows(Var x) {
  const Tensor& xv = value(x);
  Tensor out({1, xv.cols()});
  for (std::size_t r = 0; r < xv.rows(); ++r) axpy(1.0, xv.row(r), out.data());
  for (auto& v : out.data()) v /= static_cast<double>(xv.rows());
  return push(Op::MeanRows, {x.id}, std::move(out));
}

Var Graph::repeat_rows(Var x, std::size_t n) {
  const Tensor& xv = value(x);
  if (xv.rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + shape_string(xv.shape()));
  if (n == 0) throw ShapeError("repeat_rows: zero repetitions");
  Tensor out({n, xv.cols()});
  for (std::size_t r = 0; r < n; ++r) std::copy(xv.data().begin(), xv.data().end(), out.row(r).begin());
  return push(Op::RepeatRows, {x.id}, std::move(out));
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = value(parts[0]).cols();
  std::size_t rows = 0;
  std::vector<std::size_t> in;
  for (auto p : parts) {
    const Tensor& t = value(p);
    if (t.cols() != c) throw ShapeError("concat_rows: column mismatch");
    rows += t.rows();
    in.push_back(p.id);
  }
  Tensor out({rows, c});
  std::size_t off = 0;
  for (auto p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += t.size();
  }
  return push(Op::ConcatRows, std::move(in), std::move(out));
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = value(parts[0]).rows();
  std::size_t cols = 0;
  std::vector<std::size_t> in;
  for (auto p : parts) {
    const Tensor& t = value(p);
    if (t.rows() != r) throw ShapeError("concat_cols: row mismatch");
    cols += t.cols();
    in.push_back(p.id);
  }
  Tensor out({r, cols});
  std::size_t off = 0;
  for (auto p : parts) {
    const Tensor& t = value(p);
    for (std::size_t i = 0; i < r; ++i) std::copy(t.row(i).begin(), t.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    off += t.cols();
  }
  return push(Op::ConcatCols, std::move(in), std::move(out));
}

Var Graph::slice_rows(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = value(x);
  if (count == 0 || start + count > xv.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = xv.cols();
  Tensor out({count, c});
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(start * c), count * c, out.data().begin());
  Var r = push(Op::SliceRows, {x.id}, std::move(out));
  nodes_[r.id].idx = {start};
  return r;
}

Var Graph::transpose(Var x) { return push(Op::Transpose, {x.id}, layerfusion::transpose(value(x))); }

Var Graph::reshape(Var x, Shape shape) { return push(Op::Reshape, {x.id}, value(x).reshaped(std::move(shape))); }

Var Graph::gather(Var table, std::vector<std::size_t> ids) {
  const Tensor& t = value(table);
  require_rank2(t, "gather");
  if (ids.empty()) throw ShapeError("gather: no ids");
  Tensor out({ids.size(), t.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= t.rows())
      throw InvalidArgument("gather: id " + std::to_string(ids[i]) + " out of range [0, " + std::to_string(t.rows()) + ")");
    std::copy(t.row(ids[i]).begin(), t.row(ids[i]).end(), out.row(i).begin());
  }
  Var r = push(Op::Gather, {table.id}, std::move(out));
  nodes_[r.id].idx = std::move(ids);
  return r;
}

Var Graph::layer_mix(Var weights, std::span<const Var> layers) {
  const Tensor& w = value(weights);
  require_rank2(w, "layer_mix");
  if (layers.size() != w.cols()) throw ShapeError("layer_mix: weight columns must equal layer count");
  const Tensor& first = value(layers[0]);
  if (first.rows() != w.rows()) throw ShapeError("layer_mix: weight rows must equal region count");
  std::vector<std::size_t> in{weights.id};
  Tensor out({first.rows(), first.cols()});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& h = value(layers[l]);
    if (h.shape() != first.shape()) throw ShapeError("layer_mix: layer shape mismatch");
    in.push_back(layers[l].id);
    for (std::size_t i = 0; i < h.rows(); ++i) axpy(w.at(i, l), h.row(i), out.row(i));
  }
  return push(Op::LayerMix, std::move(in), std::move(out));
}

Var Graph::row_dot(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape(x, y, "row_dot");
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = kernels::dot(x.row(i), y.row(i));
  return push(Op::RowDot, {a.id, b.id}, std::move(out));
}

Var Graph::attention(Var q, Var k, Var v, std::size_t heads) {
  const Tensor& qv = value(q);
  const Tensor& kv = value(k);
  const Tensor& vv = value(v);
  require_rank2(qv, "attention");
  require_same_shape(kv, vv, "attention");
  const std::size_t d = qv.cols(), sq = qv.rows(), sk = kv.rows();
  if (kv.cols() != d) throw ShapeError("attention: query/key width mismatch");
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by head count");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({sq, d});
  Tensor probs({heads * sq, sk});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < sq; ++i) {
      auto p = probs.row(h * sq + i);
      const double* qi = qv.data().data() + i * d + off;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < sk; ++j) {
        const double* kj = kv.data().data() + j * d + off;
        double s = 0.0;
        for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      double sum = 0.0;
      for (auto& e : p) {
        e = std::exp(e - mx);
        sum += e;
      }
      double* oi = out.data().data() + i * d + off;
      for (std::size_t j = 0; j < sk; ++j) {
        p[j] /= sum;
        const double* vj = vv.data().data() + j * d + off;
        for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
      }
    }
  }
  Var r = push(Op::Attention, {q.id, k.id, v.id}, std::move(out));
  nodes_[r.id].aux = std::move(probs);
  nodes_[r.id].idx = {heads};
  return r;
}

Var Graph::sum(Var x) {
  double s = 0.0;
  for (double v : value(x).data()) s += v;
  return push(Op::Sum, {x.id}, Tensor::scalar(s));
}

Var Graph::bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& z = value(logits);
  if (z.size() != targets.size()) throw ShapeError("bce_with_logits: logits/targets size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = targets[i];
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("bce target outside [0, 1]: " + std::to_string(t));
    total += t * softplus(-z[i]) + (1.0 - t) * softplus(z[i]);
  }
  Var r = push(Op::BceWithLogits, {logits.id}, Tensor::scalar(total / static_cast<double>(z.size())));
  nodes_[r.id].aux = targets;
  return r;
}

Tensor& Graph::grad_of(std::vector<Tensor>& grads, std::size_t id) {
  Tensor& g = grads[id];
  if (g.size() == 0) g = Tensor(val(id).shape());
  return g;
}

Gradients Graph::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw InvalidArgument("variable does not belong to this graph");
  if (val(loss.id).size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_string(val(loss.id).shape()));
  std::vector<Tensor> grads(nodes_.size());
  grad_of(grads, loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (grads[id].size() == 0 || !nodes_[id].requires_grad) continue;
    backprop_node(id, grads);
  }
  Gradients out;
  for (const auto& [name, id] : params_)
    out.emplace(name, grads[id].size() ? std::move(grads[id]) : Tensor(val(id).shape()));
  return out;
}

void Graph::backprop_node(std::size_t id, std::vector<Tensor>& grads) {
  const Node& n = nodes_[id];
  const Tensor& g = grads[id];
  const Tensor& y = val(id);
  auto needs = [&](std::size_t k) { return nodes_[n.in[k]].requires_grad; };
  auto in_val = [&](std::size_t k) -> const Tensor& { return val(n.in[k]); };
  auto in_grad = [&](std::size_t k) -> Tensor& { return grad_of(grads, n.in[k]); };

  switch (n.op) {
    case Op::Param:
    case Op::Constant:
      return;
    case Op::External:
      throw UnsupportedOp("backward: gradient must flow through a node recorded outside the differentiable op set");
    case Op::MatMul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (needs(0)) kernels::matmul_bt_acc(g.data(), b.data(), in_grad(0).data(), a.rows(), b.cols(), a.cols());
      if (needs(1)) kernels::matmul_at_acc(a.data(), g.data(), in_grad(1).data(), a.rows(), a.cols(), b.cols());
      return;
    }
    case Op::Add:
      if (needs(0)) accumulate(g, in_grad(0));
      if (needs(1)) accumulate(g, in_grad(1));
      return;
    case Op::AddRowBias:
      if (needs(0)) accumulate(g, in_grad(0));
      if (needs(1)) {
        Tensor& gb = in_grad(1);
        for (std::size_t r = 0; r < g.rows(); ++r) axpy(1.0, g.row(r), gb.data());
      }
      return;
    case Op::Scale: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.scalar * g[i];
      return;
    }
    case Op::Mul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (needs(0)) {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (needs(1)) {
        Tensor& gb = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      return;
    }
    case Op::Gelu: {
      const Tensor& x = in_val(0);
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_grad(x[i]);
      return;
    }
    case Op::Sigmoid: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::SoftmaxRows: {
      Tensor& gx = in_grad(0);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = g.row(r);
        const double s = kernels::dot(yr, gr);
        auto out = gx.row(r);
        for (std::size_t c = 0; c < yr.size(); ++c) out[c] += yr[c] * (gr[c] - s);
      }
      return;
    }
    case Op::LayerNorm: {
      const Tensor& gamma = in_val(1);
      const Tensor& xhat = n.aux;
      const Tensor& inv = n.aux2;
      const std::size_t c = y.cols();
      if (needs(1) || needs(2)) {
        Tensor& gg = in_grad(1);
        Tensor& gb = in_grad(2);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto gr = g.row(r);
          auto xr = xhat.row(r);
          for (std::size_t j = 0; j < c; ++j) {
            gg[j] += gr[j] * xr[j];
            gb[j] += gr[j];
          }
        }
      }
      if (needs(0)) {
        Tensor& gx = in_grad(0);
        std::vector<double> dxhat(c);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto gr = g.row(r);
          auto xr = xhat.row(r);
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            dxhat[j] = gr[j] * gamma[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xr[j];
          }
          const double k = inv[r] / static_cast<double>(c);
          auto out = gx.row(r);
          for (std::size_t j = 0; j < c; ++j)
            out[j] += k * (static_cast<double>(c) * dxhat[j] - s1 - xr[j] * s2);
        }
      }
      return;
    }
    case Op::MeanRows: {
      Tensor& gx = in_grad(0);
      const double k = 1.0 / static_cast<double>(gx.rows());
      for (std::size_t r = 0; r < gx.rows(); ++r) axpy(k, g.data(), gx.row(r));
      return;
    }
    case Op::RepeatRows: {
      Tensor& gx = in_grad(0);
      for (std::size_t r = 0; r < g.rows(); ++r) axpy(1.0, g.row(r), gx.data());
      return;
    }
    case Op::ConcatRows: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const std::size_t len = val(n.in[k]).size();
        if (needs(k)) {
          Tensor& gk = in_grad(k);
          for (std::size_t i = 0; i < len; ++i) gk[i] += g[off + i];
        }
        off += len;
      }
      return;
    }
    case Op::ConcatCols: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const std::size_t w = val(n.in[k]).cols();
        if (needs(k)) {
          Tensor& gk = in_grad(k);
          for (std::size_t r = 0; r < g.rows(); ++r) axpy(1.0, g.row(r).subspan(off, w), gk.row(r));
        }
        off += w;
      }
      return;
    }
    case Op::SliceRows: {
      Tensor& gx = in_grad(0);
      const std::size_t off = n.idx[0] * g.cols();
      for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
      return;
    }
    case Op::Transpose: {
      Tensor& gx = in_grad(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx.at(c, r) += g.at(r, c);
      return;
    }
    case Op::Reshape:
      accumulate(g, in_grad(0));
      return;
    case Op::Gather: {
      Tensor& gt = in_grad(0);
      for (std::size_t i = 0; i < n.idx.size(); ++i) axpy(1.0, g.row(i), gt.row(n.idx[i]));
      return;
    }
    case Op::LayerMix: {
      const Tensor& w = in_val(0);
      const std::size_t layers = n.in.size() - 1;
      if (needs(0)) {
        Tensor& gw = in_grad(0);
        for (std::size_t l = 0; l < layers; ++l) {
          const Tensor& h = in_val(l + 1);
          for (std::size_t i = 0; i < h.rows(); ++i) gw.at(i, l) += kernels::dot(g.row(i), h.row(i));
        }
      }
      for (std::size_t l = 0; l < layers; ++l) {
        if (!needs(l + 1)) continue;
        Tensor& gh = in_grad(l + 1);
        for (std::size_t i = 0; i < gh.rows(); ++i) axpy(w.at(i, l), g.row(i), gh.row(i));
      }
      return;
    }
    case Op::RowDot: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (needs(0)) {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < a.rows(); ++i) axpy(g[i], b.row(i), ga.row(i));
      }
      if (needs(1)) {
        Tensor& gb = in_grad(1);
        for (std::size_t i = 0; i < a.rows(); ++i) axpy(g[i], a.row(i), gb.row(i));
      }
      return;
    }
    case Op::Attention: {
      const Tensor& qv = in_val(0);
      const Tensor& kv = in_val(1);
      const Tensor& vv = in_val(2);
      const std::size_t heads = n.idx[0];
      const std::size_t d = qv.cols(), sq = qv.rows(), sk = kv.rows(), dh = d / heads;
      const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
      Tensor& gq = in_grad(0);
      Tensor& gk = in_grad(1);
      Tensor& gv = in_grad(2);
      std::vector<double> dp(sk);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < sq; ++i) {
          auto p = n.aux.row(h * sq + i);
          const double* gi = g.data().data() + i * d + off;
          double pdp = 0.0;
          for (std::size_t j = 0; j < sk; ++j) {
            const double* vj = vv.data().data() + j * d + off;
            double* gvj = gv.data().data() + j * d + off;
            double s = 0.0;
            for (std::size_t t = 0; t < dh; ++t) {
              s += gi[t] * vj[t];
              gvj[t] += p[j] * gi[t];
            }
            dp[j] = s;
            pdp += p[j] * s;
          }
          const double* qi = qv.data().data() + i * d + off;
          double* gqi = gq.data().data() + i * d + off;
          for (std::size_t j = 0; j < sk; ++j) {
            const double ds = p[j] * (dp[j] - pdp) * scale;
            const double* kj = kv.data().data() + j * d + off;
            double* gkj = gk.data().data() + j * d + off;
            for (std::size_t t = 0; t < dh; ++t) {
              gqi[t] += ds * kj[t];
              gkj[t] += ds * qi[t];
            }
          }
        }
      }
      return;
    }
    case Op::Sum: {
      Tensor& gx = in_grad(0);
      for (auto& v : gx.data()) v += g[0];
      return;
    }
    case Op::BceWithLogits: {
      const Tensor& z = in_val(0);
      Tensor& gz = in_grad(0);
      const double k = g[0] / static_cast<double>(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) gz[i] += k * (layerfusion::sigmoid(z[i]) - n.aux[i]);
      return;
    }
  }
  throw UnsupportedOp("backward: unrecorded operation");
}

}  // namespace layerfusion
