#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mtl/graph.hpp"

namespace mtl {

struct GradCheckReport {
  std::string op_name;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool pass = false;
  /// Set when the function was non-finite at a probe, or the analytic pass failed.
  std::optional<std::size_t> failed_coordinate;
  std::string message;
};

/// Builds a scalar from a leaf on the given graph.
using ScalarFunction = std::function<Tensor(Graph&, const Tensor&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double relative_tolerance = 1e-4;
  double absolute_floor = 1e-7;
};

/// Compares the reverse-mode gradient of `f` at `point` with central differences.
/// pass == (max relative error <= tolerance || max absolute error <= floor).
GradCheckReport finite_difference_check(const ScalarFunction& f, const Tensor& point,
                                        const GradCheckOptions& options = {}, std::string op_name = "f");

}  // namespace mtl
