#pragma once

#include <cstdint>
#include <vector>

#include "mtl/tensor.hpp"

namespace mtl {

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t version = 0;
  // 0 for leaves; otherwise the id of the graph that produced this tensor.
  std::uint64_t graph_id = 0;
  std::size_t node_index = 0;
};

}  // namespace mtl
