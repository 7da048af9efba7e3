// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mixer/tensor.hpp"

namespace mixer {

template <class T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : m_graph(graph), m_id(id) {}

  /// Invalidated when the graph records another node.
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return m_id; }
  Graph<T>* graph() const noexcept { return m_graph; }
  bool valid() const noexcept { return m_graph != nullptr; }

 private:
  Graph<T>* m_graph = nullptr;
  std::size_t m_id = 0;
};

template <class T>
using Gradients = std::map<std::string, Tensor<T>>;

/// Append-only tape. Nodes are recorded in evaluation order, so a node's
/// inputs always precede it and a reverse sweep is a valid topological order.
template <class T>
class Graph {
 public:
  /// Receives the gradient flowing into the node; pushes contributions to
  /// its inputs through accumulate().
  using Backward = std::function<void(Graph& graph, const Tensor<T>& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Named leaf whose gradient is reported by grad().
  Var<T> param(std::string name, Tensor<T> value);
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return m_nodes.at(id).value; }
  bool requires_grad(std::size_t id) const { return m_nodes.at(id).requires_grad; }
  std::size_t size() const noexcept { return m_nodes.size(); }

  /// Adds `g` into the gradient buffer of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor<T>& g);
  /// Gradient buffer of node `id`, zero-filled on first use.
  Tensor<T>& grad_buffer(std::size_t id);

  /// Runs the reverse sweep from a scalar node and returns parameter gradients.
  Gradients<T> backward(Var<T> loss);
  /// Number of node backward rules executed by the last backward().
  std::size_t last_backward_visits() const noexcept { return m_visits; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    Backward backward;
    std::string name;
    bool requires_grad = false;
    bool is_param = false;
  };

  std::vector<Node> m_nodes;
  std::vector<std::optional<Tensor<T>>> m_grads;
  std::size_t m_visits = 0;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return m_graph->value(m_id);
}

/// Gradients of every named parameter reachable from `loss`. Throws
/// ContractError unless `loss` holds exactly one element.
template <class T>
Gradients<T> grad(Graph<T>& graph, Var<T> loss) {
  return graph.backward(loss);
}

using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

namespace ops {

/// Matrix product. Supported ranks: [m,k]x[k,n]; [B,m,k]x[k,n] (rows of all
/// batch items share the right operand); [m,k]x[B,k,n] (shared left operand).
template <class T>
Var<T> matmul(Var<T> a, Var<T> b);

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
template <class T>
Var<T> transpose(Var<T> a);

template <class T>
Var<T> reshape(Var<T> a, Shape shape);

/// out.flat[i] = a.flat[(*index)[i]]. Gradient scatter-adds back.
template <class T>
Var<T> gather(Var<T> a, IndexMap index, Shape shape);

template <class T>
Var<T> add(Var<T> a, Var<T> b);

/// x + b where b's shape equals a suffix of x's shape.
template <class T>
Var<T> add_bias(Var<T> x, Var<T> b);

/// x[..., R, C] + b[R] broadcast along the last axis (the bias of a
/// left-multiplied weight).
template <class T>
Var<T> add_bias_cols(Var<T> x, Var<T> b);

/// Elementwise product with a constant tensor of the same shape.
template <class T>
Var<T> mul_const(Var<T> x, Tensor<T> mask);

template <class T>
Var<T> scale(Var<T> x, T s);

/// x * Phi(x) with the exact Gaussian CDF.
template <class T>
Var<T> gelu(Var<T> x);

/// Normalizes over the last axis, then applies gamma and beta.
template <class T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps);

/// [B,S,C] -> [B,C] mean over axis 1.
template <class T>
Var<T> mean_tokens(Var<T> x);

template <class T>
Var<T> sum(Var<T> x);

/// Mean over rows of -sum(target * log_softmax(logits)). Rows of `targets`
/// must be probability vectors.
template <class T>
Var<T> softmax_xent(Var<T> logits, const Tensor<T>& targets);

/// Per-channel affine map for untied token mixing:
/// out[b,d,i] = sum_s w[i,d,s] * x[b,s,i] + bias[i,d], x is [B,S,C],
/// w is [C,D,S], bias is [C,D], out is [B,D,C].
template <class T>
Var<T> channelwise_mix(Var<T> x, Var<T> w, Var<T> bias);

}  // namespace ops

/// Scalar activations shared by the graph ops and reference code.
double gaussian_cdf(double x);
double gaussian_pdf(double x);

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace mixer
