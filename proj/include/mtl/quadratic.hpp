#pragma once

#include <span>
#include <vector>

namespace mtl {

/// Tasks L_i(theta) = 0.5 * c_i * ||theta - mu_i||^2 over one shared vector theta.
struct QuadraticTaskSet {
  std::vector<double> curvatures;
  std::vector<std::vector<double>> optima;

  QuadraticTaskSet() = default;
  QuadraticTaskSet(std::vector<double> curvatures, std::vector<std::vector<double>> optima);
  /// All optima at the origin of a `dim`-dimensional space.
  static QuadraticTaskSet centered(std::vector<double> curvatures, std::size_t dim = 1);

  std::size_t task_count() const { return curvatures.size(); }
  std::size_t dim() const { return optima.empty() ? 0 : optima.front().size(); }
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

LossAndGrad quadratic_loss_and_grad(const QuadraticTaskSet& tasks, std::span<const double> theta, std::size_t task);

}  // namespace mtl
