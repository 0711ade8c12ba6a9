#include "mtl/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "mtl/error.hpp"
#include "tensor_impl.hpp"

namespace mtl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

std::atomic<std::uint64_t> next_graph_id{1};

[[noreturn]] void shape_mismatch(OpKind kind, std::span<const Tensor> inputs, const std::string& why) {
  std::string msg = std::string(op_name(kind)) + ": " + why + " (input shapes";
  for (const auto& t : inputs) msg += " " + to_string(t.shape());
  msg += ")";
  throw ShapeError(msg);
}

struct ConvGeometry {
  std::size_t batch, in_ch, height, width, out_ch, k, out_h, out_w;
  std::size_t col_rows() const { return in_ch * k * k; }
  std::size_t col_cols() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  return {xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], xs[2] - ws[2] + 1, xs[3] - ws[2] + 1};
}

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + ((c * g.k + ki) * g.k + kj) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const double* src = plane + (oy + ki) * g.width + kj;
          std::copy(src, src + g.out_w, row + oy * g.out_w);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    double* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((c * g.k + ki) * g.k + kj) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          double* dst = plane + (oy + ki) * g.width + kj;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kBiasAdd: return "bias_add";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kMaxPool2d: return "maxpool2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kFlatten: return "flatten";
    case OpKind::kReshape: return "reshape";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kL1Loss: return "l1_loss";
  }
  return "unknown";
}

struct Graph::Node {
  OpKind kind;
  std::vector<Tensor> inputs;
  std::vector<std::uint64_t> input_versions;
  Tensor output;
  OpAttrs attrs;
  std::vector<double> saved;
  std::vector<std::size_t> saved_index;
  bool requires_grad = false;
  std::vector<double> grad;
};

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}
Graph::~Graph() = default;
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;
std::size_t Graph::size() const { return nodes_.size(); }

namespace {

struct ForwardResult {
  Shape shape;
  std::vector<double> values;
  std::vector<double> saved;
  std::vector<std::size_t> saved_index;
};

void expect_arity(OpKind kind, std::span<const Tensor> in, std::size_t lo, std::size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(lo) +
                     (lo == hi ? "" : "-" + std::to_string(hi)) + " inputs, got " + std::to_string(in.size()));
  }
}

ForwardResult forward_kernel(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  ForwardResult r;
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      expect_arity(kind, in, 2, 2);
      if (in[0].shape() != in[1].shape()) shape_mismatch(kind, in, "operands must have equal shapes");
      auto a = in[0].data();
      auto b = in[1].data();
      r.shape = in[0].shape();
      r.values.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        r.values[i] = kind == OpKind::kAdd ? a[i] + b[i] : kind == OpKind::kSub ? a[i] - b[i] : a[i] * b[i];
      }
      return r;
    }
    case OpKind::kScalarMul: {
      expect_arity(kind, in, 1, 1);
      if (!std::isfinite(attrs.scalar)) throw NonFiniteError("scalar_mul: non-finite factor");
      auto a = in[0].data();
      r.shape = in[0].shape();
      r.values.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) r.values[i] = attrs.scalar * a[i];
      return r;
    }
    case OpKind::kMatMul: {
      expect_arity(kind, in, 2, 2);
      if (in[0].rank() != 2 || in[1].rank() != 2) shape_mismatch(kind, in, "operands must be rank 2");
      const std::size_t m = in[0].dim(0), k = in[0].dim(1);
      const std::size_t n = attrs.transpose_rhs ? in[1].dim(0) : in[1].dim(1);
      const std::size_t kb = attrs.transpose_rhs ? in[1].dim(1) : in[1].dim(0);
      if (k != kb) shape_mismatch(kind, in, "inner dimensions differ");
      r.shape = {m, n};
      r.values.resize(m * n);
      ConstMatMap a(in[0].data().data(), m, k);
      MatMap out(r.values.data(), m, n);
      if (attrs.transpose_rhs) {
        ConstMatMap b(in[1].data().data(), n, k);
        out.noalias() = a * b.transpose();
      } else {
        ConstMatMap b(in[1].data().data(), k, n);
        out.noalias() = a * b;
      }
      return r;
    }
    case OpKind::kBiasAdd: {
      expect_arity(kind, in, 2, 2);
      if (in[0].rank() < 1 || in[1].rank() != 1 || in[0].shape().back() != in[1].dim(0)) {
        shape_mismatch(kind, in, "bias length must equal the last input dimension");
      }
      auto x = in[0].data();
      auto b = in[1].data();
      const std::size_t n = b.size();
      r.shape = in[0].shape();
      r.values.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) r.values[i] = x[i] + b[i % n];
      return r;
    }
    case OpKind::kConv2d: {
      expect_arity(kind, in, 2, 3);
      const auto& xs = in[0].shape();
      const auto& ws = in[1].shape();
      if (xs.size() != 4 || ws.size() != 4) shape_mismatch(kind, in, "input and weight must be rank 4");
      if (ws[1] != xs[1]) shape_mismatch(kind, in, "weight input channels differ from input channels");
      if (ws[2] != ws[3]) shape_mismatch(kind, in, "kernel must be square");
      if (ws[2] > xs[2] || ws[3] > xs[3]) shape_mismatch(kind, in, "kernel larger than input");
      if (in.size() == 3 && (in[2].rank() != 1 || in[2].dim(0) != ws[0])) {
        shape_mismatch(kind, in, "bias must have one entry per output channel");
      }
      const auto g = conv_geometry(in[0], in[1]);
      r.shape = {g.batch, g.out_ch, g.out_h, g.out_w};
      r.values.resize(numel(r.shape));
      std::vector<double> col(g.col_rows() * g.col_cols());
      ConstMatMap w(in[1].data().data(), g.out_ch, g.col_rows());
      const std::size_t in_stride = g.in_ch * g.height * g.width;
      const std::size_t out_stride = g.out_ch * g.col_cols();
      for (std::size_t s = 0; s < g.batch; ++s) {
        im2col(in[0].data().data() + s * in_stride, g, col.data());
        ConstMatMap c(col.data(), g.col_rows(), g.col_cols());
        MatMap out(r.values.data() + s * out_stride, g.out_ch, g.col_cols());
        out.noalias() = w * c;
        if (in.size() == 3) {
          auto b = in[2].data();
          for (std::size_t o = 0; o < g.out_ch; ++o) out.row(o).array() += b[o];
        }
      }
      return r;
    }
    case OpKind::kMaxPool2d: {
      expect_arity(kind, in, 1, 1);
      const auto& xs = in[0].shape();
      if (xs.size() != 4) shape_mismatch(kind, in, "input must be rank 4");
      if (xs[2] < 2 || xs[3] < 2) shape_mismatch(kind, in, "spatial dims must be at least 2");
      const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], oh = h / 2, ow = w / 2;
      r.shape = {xs[0], xs[1], oh, ow};
      r.values.resize(planes * oh * ow);
      r.saved_index.resize(r.values.size());
      auto x = in[0].data();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            std::size_t best = p * h * w + 2 * oy * w + 2 * ox;
            for (std::size_t dy = 0; dy < 2; ++dy) {
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = p * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                if (x[idx] > x[best]) best = idx;
              }
            }
            const std::size_t o = (p * oh + oy) * ow + ox;
            r.values[o] = x[best];
            r.saved_index[o] = best;
          }
        }
      }
      return r;
    }
    case OpKind::kRelu: {
      expect_arity(kind, in, 1, 1);
      auto x = in[0].data();
      r.shape = in[0].shape();
      r.values.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) r.values[i] = x[i] > 0.0 ? x[i] : 0.0;
      return r;
    }
    case OpKind::kFlatten: {
      expect_arity(kind, in, 1, 1);
      if (in[0].rank() < 2) shape_mismatch(kind, in, "input must have a batch axis and at least one feature axis");
      r.shape = {in[0].dim(0), in[0].size() / in[0].dim(0)};
      r.values.assign(in[0].data().begin(), in[0].data().end());
      return r;
    }
    case OpKind::kReshape: {
      expect_arity(kind, in, 1, 1);
      if (numel(attrs.shape) != in[0].size() || std::count(attrs.shape.begin(), attrs.shape.end(), 0u) > 0) {
        shape_mismatch(kind, in, "cannot reshape to " + to_string(attrs.shape));
      }
      r.shape = attrs.shape;
      r.values.assign(in[0].data().begin(), in[0].data().end());
      return r;
    }
    case OpKind::kMean:
    case OpKind::kSum: {
      expect_arity(kind, in, 1, 1);
      double acc = 0.0;
      for (double v : in[0].data()) acc += v;
      if (kind == OpKind::kMean) acc /= static_cast<double>(in[0].size());
      r.shape = {};
      r.values = {acc};
      return r;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      expect_arity(kind, in, 1, 1);
      if (in[0].rank() != 2) shape_mismatch(kind, in, "logits must be [batch, classes]");
      const std::size_t rows = in[0].dim(0), classes = in[0].dim(1);
      if (attrs.labels.size() != rows) {
        shape_mismatch(kind, in, std::to_string(attrs.labels.size()) + " labels for " + std::to_string(rows) + " rows");
      }
      auto z = in[0].data();
      r.saved.resize(z.size());
      double total = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        const auto label = attrs.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
          throw Error("softmax_cross_entropy: label " + std::to_string(label) + " at row " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
        }
        const double* row = z.data() + i * classes;
        const double m = *std::max_element(row, row + classes);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - m);
        const double lse = m + std::log(denom);
        for (std::size_t j = 0; j < classes; ++j) r.saved[i * classes + j] = std::exp(row[j] - lse);
        total += lse - row[label];
      }
      r.shape = {};
      r.values = {total / static_cast<double>(rows)};
      return r;
    }
    case OpKind::kL1Loss: {
      expect_arity(kind, in, 2, 2);
      if (in[0].shape() != in[1].shape()) shape_mismatch(kind, in, "prediction and target must have equal shapes");
      auto p = in[0].data();
      auto t = in[1].data();
      r.saved.resize(p.size());
      double total = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        total += std::abs(d);
        r.saved[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      r.shape = {};
      r.values = {total / static_cast<double>(p.size())};
      return r;
    }
  }
  throw GraphError("unsupported op kind");
}

// Accumulates input gradients. `gin[i]` is empty when input i needs none.
void backward_kernel(OpKind kind, const std::vector<Tensor>& in, const OpAttrs& attrs, const std::vector<double>& saved,
                     const std::vector<std::size_t>& saved_index, std::span<const double> gout,
                     std::array<std::span<double>, 3> gin) {
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign = kind == OpKind::kAdd ? 1.0 : -1.0;
      for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += gout[i];
      for (std::size_t i = 0; i < gin[1].size(); ++i) gin[1][i] += sign * gout[i];
      return;
    }
    case OpKind::kMul: {
      auto a = in[0].data();
      auto b = in[1].data();
      for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += gout[i] * b[i];
      for (std::size_t i = 0; i < gin[1].size(); ++i) gin[1][i] += gout[i] * a[i];
      return;
    }
    case OpKind::kScalarMul:
      for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += attrs.scalar * gout[i];
      return;
    case OpKind::kMatMul: {
      const std::size_t m = in[0].dim(0), k = in[0].dim(1);
      const std::size_t n = attrs.transpose_rhs ? in[1].dim(0) : in[1].dim(1);
      ConstMatMap g(gout.data(), m, n);
      ConstMatMap a(in[0].data().data(), m, k);
      if (attrs.transpose_rhs) {
        ConstMatMap b(in[1].data().data(), n, k);
        if (!gin[0].empty()) MatMap(gin[0].data(), m, k).noalias() += g * b;
        if (!gin[1].empty()) MatMap(gin[1].data(), n, k).noalias() += g.transpose() * a;
      } else {
        ConstMatMap b(in[1].data().data(), k, n);
        if (!gin[0].empty()) MatMap(gin[0].data(), m, k).noalias() += g * b.transpose();
        if (!gin[1].empty()) MatMap(gin[1].data(), k, n).noalias() += a.transpose() * g;
      }
      return;
    }
    case OpKind::kBiasAdd: {
      for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += gout[i];
      if (!gin[1].empty()) {
        const std::size_t n = gin[1].size();
        for (std::size_t i = 0; i < gout.size(); ++i) gin[1][i % n] += gout[i];
      }
      return;
    }
    case OpKind::kConv2d: {
      const auto g = conv_geometry(in[0], in[1]);
      const std::size_t in_stride = g.in_ch * g.height * g.width;
      const std::size_t out_stride = g.out_ch * g.col_cols();
      std::vector<double> col(g.col_rows() * g.col_cols());
      std::vector<double> dcol(gin[0].empty() ? 0 : col.size());
      ConstMatMap w(in[1].data().data(), g.out_ch, g.col_rows());
      for (std::size_t s = 0; s < g.batch; ++s) {
        ConstMatMap go(gout.data() + s * out_stride, g.out_ch, g.col_cols());
        if (!gin[1].empty()) {
          im2col(in[0].data().data() + s * in_stride, g, col.data());
          ConstMatMap c(col.data(), g.col_rows(), g.col_cols());
          MatMap(gin[1].data(), g.out_ch, g.col_rows()).noalias() += go * c.transpose();
        }
        if (!gin[0].empty()) {
          MatMap dc(dcol.data(), g.col_rows(), g.col_cols());
          dc.noalias() = w.transpose() * go;
          col2im_add(dcol.data(), g, gin[0].data() + s * in_stride);
        }
        if (in.size() == 3 && !gin[2].empty()) {
          for (std::size_t o = 0; o < g.out_ch; ++o) gin[2][o] += go.row(o).sum();
        }
      }
      return;
    }
    case OpKind::kMaxPool2d:
      for (std::size_t o = 0; o < gout.size(); ++o) gin[0][saved_index[o]] += gout[o];
      return;
    case OpKind::kRelu: {
      auto x = in[0].data();
      for (std::size_t i = 0; i < gin[0].size(); ++i) {
        if (x[i] > 0.0) gin[0][i] += gout[i];
      }
      return;
    }
    case OpKind::kFlatten:
    case OpKind::kReshape:
      for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += gout[i];
      return;
    case OpKind::kMean:
    case OpKind::kSum: {
      const double scale = kind == OpKind::kMean ? gout[0] / static_cast<double>(in[0].size()) : gout[0];
      for (auto& v : gin[0]) v += scale;
      return;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      const std::size_t rows = in[0].dim(0), classes = in[0].dim(1);
      const double scale = gout[0] / static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
          double p = saved[i * classes + j];
          if (static_cast<std::int64_t>(j) == attrs.labels[i]) p -= 1.0;
          gin[0][i * classes + j] += scale * p;
        }
      }
      return;
    }
    case OpKind::kL1Loss: {
      const double scale = gout[0] / static_cast<double>(saved.size());
      for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += scale * saved[i];
      for (std::size_t i = 0; i < gin[1].size(); ++i) gin[1][i] -= scale * saved[i];
      return;
    }
  }
}

}  // namespace

Tensor Graph::apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  if (consumed_) throw GraphError(std::string(op_name(kind)) + ": graph already consumed by backward");
  bool requires_grad = false;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& impl = inputs[i].impl();
    if (impl.graph_id == 0) {
      if (!all_finite(impl.data)) {
        throw NonFiniteError(std::string(op_name(kind)) + ": non-finite value in input " + std::to_string(i));
      }
      requires_grad = requires_grad || impl.requires_grad;
    } else if (impl.graph_id != id_) {
      throw GraphError(std::string(op_name(kind)) + ": input " + std::to_string(i) +
                       " belongs to another graph; detach it first");
    } else {
      requires_grad = requires_grad || nodes_[impl.node_index].requires_grad;
    }
  }

  auto result = forward_kernel(kind, inputs, attrs);
  if (!all_finite(result.values)) throw NonFiniteError(std::string(op_name(kind)) + ": produced a non-finite value");

  auto out = std::make_shared<Tensor::Impl>();
  out->shape = std::move(result.shape);
  out->data = std::move(result.values);
  out->requires_grad = requires_grad;
  out->graph_id = id_;
  out->node_index = nodes_.size();

  Node node;
  node.kind = kind;
  node.inputs.assign(inputs.begin(), inputs.end());
  for (const auto& t : inputs) node.input_versions.push_back(t.version());
  node.output = Tensor(out);
  node.attrs = attrs;
  node.saved = std::move(result.saved);
  node.saved_index = std::move(result.saved_index);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.back().output;
}

void Graph::backward(const Tensor& root) {
  if (consumed_) throw GraphError("backward: graph already consumed");
  const auto& root_impl = root.impl();
  if (root_impl.graph_id != id_) throw GraphError("backward: root does not belong to this graph");
  if (!root_impl.shape.empty()) throw ShapeError("backward: root must be a scalar, got " + to_string(root_impl.shape));
  consumed_ = true;

  const std::size_t root_index = root_impl.node_index;
  if (!nodes_[root_index].requires_grad) return;
  for (std::size_t i = 0; i <= root_index; ++i) {
    if (nodes_[i].requires_grad) nodes_[i].grad.assign(nodes_[i].output.size(), 0.0);
  }
  nodes_[root_index].grad[0] = 1.0;

  for (std::size_t idx = root_index + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (!node.requires_grad) continue;
    std::array<std::span<double>, 3> gin{};
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      auto& impl = node.inputs[i].impl();
      if (impl.version != node.input_versions[i]) {
        throw GraphError(std::string("backward: input ") + std::to_string(i) + " of " +
                         std::string(op_name(node.kind)) + " was modified after forward");
      }
      if (impl.graph_id == 0) {
        if (impl.requires_grad) gin[i] = impl.grad;
      } else if (nodes_[impl.node_index].requires_grad) {
        gin[i] = nodes_[impl.node_index].grad;
      }
    }
    backward_kernel(node.kind, node.inputs, node.attrs, node.saved, node.saved_index, node.grad, gin);
  }
}

std::span<const double> Graph::grad_of(const Tensor& t) const {
  const auto& impl = t.impl();
  if (impl.graph_id != id_) throw GraphError("grad_of: tensor does not belong to this graph");
  if (!consumed_) throw GraphError("grad_of: backward has not run");
  const auto& node = nodes_[impl.node_index];
  if (node.grad.empty()) throw GraphError("grad_of: tensor is not on a differentiable path to the root");
  return node.grad;
}

Tensor forward_op(Graph& graph, OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  return graph.apply(kind, inputs, attrs);
}

void backward(Graph& graph, const Tensor& root) { graph.backward(root); }

namespace ops {

namespace {
Tensor unary(Graph& g, OpKind kind, const Tensor& a, const OpAttrs& attrs = {}) {
  std::array<Tensor, 1> in{a};
  return g.apply(kind, in, attrs);
}
Tensor binary(Graph& g, OpKind kind, const Tensor& a, const Tensor& b, const OpAttrs& attrs = {}) {
  std::array<Tensor, 2> in{a, b};
  return g.apply(kind, in, attrs);
}
}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) { return binary(g, OpKind::kAdd, a, b); }
Tensor sub(Graph& g, const Tensor& a, const Tensor& b) { return binary(g, OpKind::kSub, a, b); }
Tensor mul(Graph& g, const Tensor& a, const Tensor& b) { return binary(g, OpKind::kMul, a, b); }

Tensor scale(Graph& g, const Tensor& a, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return unary(g, OpKind::kScalarMul, a, attrs);
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool transpose_rhs) {
  OpAttrs attrs;
  attrs.transpose_rhs = transpose_rhs;
  return binary(g, OpKind::kMatMul, a, b, attrs);
}

Tensor bias_add(Graph& g, const Tensor& x, const Tensor& bias) { return binary(g, OpKind::kBiasAdd, x, bias); }

Tensor conv2d(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (bias.defined()) {
    std::array<Tensor, 3> in{x, weight, bias};
    return g.apply(OpKind::kConv2d, in);
  }
  return binary(g, OpKind::kConv2d, x, weight);
}

Tensor maxpool2d(Graph& g, const Tensor& x) { return unary(g, OpKind::kMaxPool2d, x); }
Tensor relu(Graph& g, const Tensor& x) { return unary(g, OpKind::kRelu, x); }
Tensor flatten(Graph& g, const Tensor& x) { return unary(g, OpKind::kFlatten, x); }

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return unary(g, OpKind::kReshape, x, attrs);
}

Tensor mean(Graph& g, const Tensor& x) { return unary(g, OpKind::kMean, x); }
Tensor sum(Graph& g, const Tensor& x) { return unary(g, OpKind::kSum, x); }

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const std::int64_t> labels) {
  OpAttrs attrs;
  attrs.labels.assign(labels.begin(), labels.end());
  return unary(g, OpKind::kSoftmaxCrossEntropy, logits, attrs);
}

Tensor l1_loss(Graph& g, const Tensor& prediction, const Tensor& target) {
  return binary(g, OpKind::kL1Loss, prediction, target);
}

}  // namespace ops

}  // namespace mtl
