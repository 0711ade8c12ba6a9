#pragma once

#include <string>
#include <vector>

#include "mtl/graph.hpp"
#include "mtl/random.hpp"

namespace mtl {

enum class LayerKind { kDense, kConv2d, kRelu, kMaxPool2d, kFlatten };

std::string_view layer_kind_name(LayerKind kind);

/// Dimensions for init_layer. Dense uses in/out; conv2d uses in/out channels and kernel.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::kDense, in, out, 0}; }
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k) {
    return {LayerKind::kConv2d, in_ch, out_ch, k};
  }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0, 0}; }
  static LayerSpec maxpool2d() { return {LayerKind::kMaxPool2d, 0, 0, 0}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0, 0}; }
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // dense [out, in]; conv2d [out_ch, in_ch, k, k]
  Tensor bias;    // [out]

  bool has_parameters() const { return weight.defined(); }
  /// Per-sample output shape for a per-sample input shape; throws ShapeError on mismatch.
  Shape output_shape(const Shape& input) const;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<Parameter>;

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
Layer init_layer(const LayerSpec& spec, Rng& rng);

/// Ordered layer stack with shapes validated against a per-sample input shape.
class Sequential {
 public:
  Sequential() = default;
  Sequential(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Weight then bias for each parameterized layer, named "<prefix>.<index>.weight".
  ParameterList parameters(const std::string& prefix) const;
  std::vector<Tensor> parameter_tensors() const;

 private:
  Shape input_shape_;
  Shape output_shape_;
  std::vector<Layer> layers_;
};

/// x is [batch, input_shape...]. Errors name the failing layer index.
Tensor forward(Graph& g, const Sequential& model, const Tensor& x);
Tensor forward_layer(Graph& g, const Layer& layer, const Tensor& x);

/// p <- p - step_size * grad(p). Gradients are left untouched.
void sgd_step(std::span<const Parameter> params, double step_size);
void sgd_step(std::span<const Tensor> params, double step_size);

class SgdOptimizer {
 public:
  explicit SgdOptimizer(double step_size);
  double step_size() const { return step_size_; }
  void step(std::span<const Parameter> params) const { sgd_step(params, step_size_); }

 private:
  double step_size_;
};

/// LeNet-style shared trunk for [1, 36, 36] inputs; output is 720 features.
Sequential make_reference_trunk(Rng& rng, std::size_t canvas = 36);
/// dense(in -> 50) -> relu -> dense(50 -> classes).
Sequential make_reference_head(std::size_t in_features, std::size_t classes, Rng& rng);

}  // namespace mtl
