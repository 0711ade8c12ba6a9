#include "mtl/layers.hpp"

#include <cmath>

#include "mtl/error.hpp"

namespace mtl {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

Shape Layer::output_shape(const Shape& input) const {
  auto fail = [&](const std::string& why) -> Shape {
    throw ShapeError(std::string(layer_kind_name(spec.kind)) + ": " + why + ", got input " + to_string(input));
  };
  switch (spec.kind) {
    case LayerKind::kDense:
      if (input.size() != 1 || input[0] != spec.in) return fail("expects [" + std::to_string(spec.in) + "]");
      return {spec.out};
    case LayerKind::kConv2d:
      if (input.size() != 3 || input[0] != spec.in) return fail("expects [" + std::to_string(spec.in) + ",H,W]");
      if (input[1] < spec.kernel || input[2] < spec.kernel) return fail("kernel larger than input");
      return {spec.out, input[1] - spec.kernel + 1, input[2] - spec.kernel + 1};
    case LayerKind::kRelu:
      return input;
    case LayerKind::kMaxPool2d:
      if (input.size() != 3 || input[1] < 2 || input[2] < 2) return fail("expects [C,H,W] with H,W >= 2");
      return {input[0], input[1] / 2, input[2] / 2};
    case LayerKind::kFlatten:
      return {numel(input)};
  }
  return fail("unknown layer kind");
}

Layer init_layer(const LayerSpec& spec, Rng& rng) {
  Layer layer{spec, {}, {}};
  std::size_t fan_in = 0;
  Shape wshape;
  switch (spec.kind) {
    case LayerKind::kDense:
      if (spec.in == 0 || spec.out == 0) throw ShapeError("dense: dimensions must be positive");
      fan_in = spec.in;
      wshape = {spec.out, spec.in};
      break;
    case LayerKind::kConv2d:
      if (spec.in == 0 || spec.out == 0 || spec.kernel == 0) throw ShapeError("conv2d: dimensions must be positive");
      fan_in = spec.in * spec.kernel * spec.kernel;
      wshape = {spec.out, spec.in, spec.kernel, spec.kernel};
      break;
    default:
      return layer;
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> w(numel(wshape));
  for (auto& v : w) v = rng.uniform(-bound, bound);
  layer.weight = Tensor::from(wshape, std::move(w), true);
  layer.bias = Tensor::zeros({spec.out}, true);
  return layer;
}

Sequential::Sequential(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  Shape s = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      s = layers_[i].output_shape(s);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  output_shape_ = s;
}

ParameterList Sequential::parameters(const std::string& prefix) const {
  ParameterList out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!layers_[i].has_parameters()) continue;
    out.push_back({prefix + "." + std::to_string(i) + ".weight", layers_[i].weight});
    out.push_back({prefix + "." + std::to_string(i) + ".bias", layers_[i].bias});
  }
  return out;
}

std::vector<Tensor> Sequential::parameter_tensors() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_) {
    if (!layer.has_parameters()) continue;
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

Tensor forward_layer(Graph& g, const Layer& layer, const Tensor& x) {
  switch (layer.spec.kind) {
    case LayerKind::kDense:
      return ops::bias_add(g, ops::matmul(g, x, layer.weight, true), layer.bias);
    case LayerKind::kConv2d:
      return ops::conv2d(g, x, layer.weight, layer.bias);
    case LayerKind::kRelu:
      return ops::relu(g, x);
    case LayerKind::kMaxPool2d:
      return ops::maxpool2d(g, x);
    case LayerKind::kFlatten:
      return ops::flatten(g, x);
  }
  throw ShapeError("unknown layer kind");
}

Tensor forward(Graph& g, const Sequential& model, const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() != model.input_shape().size() + 1 || !std::equal(xs.begin() + 1, xs.end(), model.input_shape().begin())) {
    throw ShapeError("layer 0: input " + to_string(xs) + " does not match [batch]+" + to_string(model.input_shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    try {
      h = forward_layer(g, model.layers()[i], h);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return h;
}

void sgd_step(std::span<const Parameter> params, double step_size) {
  if (!std::isfinite(step_size) || step_size < 0.0) throw Error("sgd_step: step size must be finite and >= 0");
  for (const auto& p : params) {
    if (!p.tensor.defined() || !p.tensor.requires_grad()) {
      throw Error("sgd_step: parameter '" + p.name + "' has no gradient");
    }
  }
  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto g = t.grad();
    auto v = t.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step_size * g[i];
  }
}

void sgd_step(std::span<const Tensor> params, double step_size) {
  ParameterList named;
  named.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) named.push_back({"#" + std::to_string(i), params[i]});
  sgd_step(named, step_size);
}

SgdOptimizer::SgdOptimizer(double step_size) : step_size_(step_size) {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("SgdOptimizer: step size must be > 0");
}

Sequential make_reference_trunk(Rng& rng, std::size_t canvas) {
  std::vector<Layer> layers;
  layers.push_back(init_layer(LayerSpec::conv2d(1, 10, 5), rng));
  layers.push_back(init_layer(LayerSpec::relu(), rng));
  layers.push_back(init_layer(LayerSpec::maxpool2d(), rng));
  layers.push_back(init_layer(LayerSpec::conv2d(10, 20, 5), rng));
  layers.push_back(init_layer(LayerSpec::relu(), rng));
  layers.push_back(init_layer(LayerSpec::maxpool2d(), rng));
  layers.push_back(init_layer(LayerSpec::flatten(), rng));
  return Sequential({1, canvas, canvas}, std::move(layers));
}

Sequential make_reference_head(std::size_t in_features, std::size_t classes, Rng& rng) {
  std::vector<Layer> layers;
  layers.push_back(init_layer(LayerSpec::dense(in_features, 50), rng));
  layers.push_back(init_layer(LayerSpec::relu(), rng));
  layers.push_back(init_layer(LayerSpec::dense(50, classes), rng));
  return Sequential({in_features}, std::move(layers));
}

}  // namespace mtl
