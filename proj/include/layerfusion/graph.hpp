#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "layerfusion/params.hpp"
#include "layerfusion/tensor.hpp"

namespace layerfusion {

// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class Op {
  Param,
  Constant,
  External,
  MatMul,
  Add,
  AddRowBias,
  Scale,
  Mul,
  Gelu,
  Sigmoid,
  SoftmaxRows,
  LayerNorm,
  MeanRows,
  RepeatRows,
  ConcatRows,
  ConcatCols,
  SliceRows,
  Transpose,
  Reshape,
  Gather,
  LayerMix,
  RowDot,
  Attention,
  Sum,
  BceWithLogits,
};

// Tape of tensor operations supporting exact reverse-mode differentiation.
// Parameters are bound by name and referenced, not copied; the ParamStore
// must outlive the graph and stay unmodified until backward() returns.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var param(const std::string& name, const Tensor& value);
  Var param(const ParamStore& store, const std::string& name) { return param(name, store.at(name)); }
  Var constant(Tensor value);
  // Records a value computed outside the differentiable op set. Gradients
  // cannot flow through it; backward() raises UnsupportedOp if they must.
  Var external(Tensor value, std::vector<Var> inputs);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // x [r, c] + bias broadcast over rows; bias has c elements.
  Var add_row_bias(Var x, Var bias);
  Var scale(Var x, double s);
  Var mul(Var a, Var b);
  Var gelu(Var x);
  Var sigmoid(Var x);
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  // [r, c] -> [1, c]
  Var mean_rows(Var x);
  // [1, c] -> [n, c]
  Var repeat_rows(Var x, std::size_t n);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var x, std::size_t start, std::size_t count);
  Var transpose(Var x);
  Var reshape(Var x, Shape shape);
  // Rows of table [V, d] selected by ids -> [ids.size(), d].
  Var gather(Var table, std::vector<std::size_t> ids);
  // out[i] = sum_l weights[i, l] * layers[l][i]; weights [n, K], layers K x [n, d].
  Var layer_mix(Var weights, std::span<const Var> layers);
  // out[i, 0] = dot(a[i], b[i]); a, b [n, d].
  Var row_dot(Var a, Var b);
  // Multi-head scaled dot-product attention. q [sq, d], k and v [sk, d].
  Var attention(Var q, Var k, Var v, std::size_t heads);
  Var sum(Var x);
  // Mean over elements of -[t log sigmoid(z) + (1 - t) log(1 - sigmoid(z))].
  Var bce_with_logits(Var logits, const Tensor& targets);

  const Tensor& value(Var v) const;
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradients of the scalar `loss` with respect to every parameter bound on
  // this graph. Parameters the loss does not depend on get zero tensors.
  Gradients backward(Var loss);

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> in;
    Tensor value;
    const Tensor* ref = nullptr;
    bool requires_grad = false;
    Tensor aux;
    Tensor aux2;
    std::vector<std::size_t> idx;
    double scalar = 0.0;
    std::string name;
  };

  const Tensor& val(std::size_t id) const;
  Var push(Op op, std::vector<std::size_t> in, Tensor value);
  Tensor& grad_of(std::vector<Tensor>& grads, std::size_t id);
  void backprop_node(std::size_t id, std::vector<Tensor>& grads);

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
};

}  // namespace layerfusion
