#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mtl/tensor.hpp"

namespace mtl {

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kMatMul,
  kBiasAdd,
  kConv2d,
  kMaxPool2d,
  kRelu,
  kFlatten,
  kReshape,
  kMean,
  kSum,
  kSoftmaxCrossEntropy,
  kL1Loss,
};

std::string_view op_name(OpKind kind);

struct OpAttrs {
  double scalar = 0.0;               // kScalarMul
  bool transpose_rhs = false;        // kMatMul: rhs given as [n, k]
  Shape shape;                       // kReshape
  std::vector<std::int64_t> labels;  // kSoftmaxCrossEntropy, one per row
};

/// Append-only record of the operations of one forward pass.
///
/// Graphs are single-use: backward() may run once, after which the graph
/// only answers grad_of() queries. Every node's inputs precede it in append
/// order, so backward is a single reverse sweep.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;
  ~Graph();

  Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

  /// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
  void backward(const Tensor& root);

  /// Gradient of the backward root with respect to an intermediate tensor of this graph.
  std::span<const double> grad_of(const Tensor& t) const;

  std::size_t size() const;
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }

 private:
  struct Node;
  std::uint64_t id_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Free-function form of Graph::apply.
Tensor forward_op(Graph& graph, OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});
void backward(Graph& graph, const Tensor& root);

namespace ops {

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool transpose_rhs = false);
Tensor bias_add(Graph& g, const Tensor& x, const Tensor& bias);
/// Stride 1, valid padding. Input [B,C,H,W], weight [O,C,k,k], bias [O] (optional).
Tensor conv2d(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias = {});
/// 2x2 window, stride 2; odd trailing rows/columns are dropped.
Tensor maxpool2d(Graph& g, const Tensor& x);
Tensor relu(Graph& g, const Tensor& x);
Tensor flatten(Graph& g, const Tensor& x);
Tensor reshape(Graph& g, const Tensor& x, Shape shape);
Tensor mean(Graph& g, const Tensor& x);
Tensor sum(Graph& g, const Tensor& x);
/// Mean over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const std::int64_t> labels);
/// Mean absolute difference.
Tensor l1_loss(Graph& g, const Tensor& prediction, const Tensor& target);

}  // namespace ops

}  // namespace mtl
