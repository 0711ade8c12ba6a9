#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mtl {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Graph;

/// Dense row-major f64 array with an optional gradient slot.
///
/// Tensor is a shared handle: copies alias the same storage. Leaves are
/// created with the factory functions below; tensors produced by a Graph
/// carry lineage back to it and have no gradient slot of their own (use
/// Graph::grad_of after backward).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> data() const;
  /// Write access to the values. Invalidates any graph that saved them.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Incremented on every mutable_data() call.
  std::uint64_t version() const;

  /// Fresh leaf holding a copy of the values.
  Tensor detached(bool requires_grad = false) const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl() const;
  Impl& impl();

  std::shared_ptr<Impl> impl_;

  friend class Graph;
};

/// Sets every gradient in `params` to zero.
void zero_grads(std::span<const Tensor> params);

bool all_finite(std::span<const double> values);

}  // namespace mtl
