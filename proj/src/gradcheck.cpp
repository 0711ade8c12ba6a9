#include "mtl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mtl/error.hpp"

namespace mtl {

GradCheckReport finite_difference_check(const ScalarFunction& f, const Tensor& point, const GradCheckOptions& options,
                                        std::string op_name) {
  if (!(options.step > 0.0)) throw Error("finite_difference_check: step must be positive");
  GradCheckReport report;
  report.op_name = std::move(op_name);

  auto evaluate = [&](const Tensor& x) -> std::optional<double> {
    try {
      Graph g;
      const double v = f(g, x).item();
      if (!std::isfinite(v)) return std::nullopt;
      return v;
    } catch (const NonFiniteError&) {
      return std::nullopt;
    }
  };

  Tensor leaf = point.detached(true);
  std::vector<double> analytic;
  try {
    Graph g;
    Tensor y = f(g, leaf);
    if (!leaf.requires_grad() || y.is_leaf()) {
      analytic.assign(leaf.size(), 0.0);
    } else {
      g.backward(y);
      analytic.assign(leaf.grad().begin(), leaf.grad().end());
    }
  } catch (const NonFiniteError& e) {
    report.message = std::string("non-finite at the base point: ") + e.what();
    return report;
  }

  std::vector<double> base(point.data().begin(), point.data().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += options.step;
    minus[i] -= options.step;
    auto fp = evaluate(Tensor::from(point.shape(), std::move(plus)));
    auto fm = evaluate(Tensor::from(point.shape(), std::move(minus)));
    if (!fp || !fm) {
      report.failed_coordinate = i;
      report.message = "non-finite value at probe of coordinate " + std::to_string(i);
      report.pass = false;
      return report;
    }
    const double numeric = (*fp - *fm) / (2.0 * options.step);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
    const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    report.max_relative_error = std::max(report.max_relative_error, rel_err);
  }
  report.pass = report.max_relative_error <= options.relative_tolerance ||
                report.max_absolute_error <= options.absolute_floor;
  return report;
}

}  // namespace mtl
