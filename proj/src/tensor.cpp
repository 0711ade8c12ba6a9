#include "mtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mtl/error.hpp"
#include "tensor_impl.hpp"

namespace mtl {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->data.assign(numel(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw GraphError("use of an undefined tensor");
  return *impl_;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw GraphError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::size() const { return impl().data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() {
  auto& i = impl();
  ++i.version;
  return i.data;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
bool Tensor::is_leaf() const { return impl().graph_id == 0; }

std::span<const double> Tensor::grad() const {
  const auto& i = impl();
  if (i.graph_id != 0) throw GraphError("non-leaf tensor has no gradient slot; use Graph::grad_of");
  if (!i.requires_grad) throw GraphError("tensor does not require grad");
  return i.grad;
}

std::span<double> Tensor::mutable_grad() {
  auto& i = impl();
  if (i.graph_id != 0) throw GraphError("non-leaf tensor has no gradient slot; use Graph::grad_of");
  if (!i.requires_grad) throw GraphError("tensor does not require grad");
  return i.grad;
}

void Tensor::zero_grad() {
  auto& i = impl();
  std::fill(i.grad.begin(), i.grad.end(), 0.0);
}

std::uint64_t Tensor::version() const { return impl().version; }

Tensor Tensor::detached(bool requires_grad) const {
  const auto& i = impl();
  return from(i.shape, i.data, requires_grad);
}

void zero_grads(std::span<const Tensor> params) {
  for (auto t : params) t.zero_grad();
}

}  // namespace mtl
