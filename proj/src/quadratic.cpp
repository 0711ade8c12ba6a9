#include "mtl/quadratic.hpp"

#include <cmath>
#include <string>

#include "mtl/error.hpp"

namespace mtl {

QuadraticTaskSet::QuadraticTaskSet(std::vector<double> c, std::vector<std::vector<double>> mu)
    : curvatures(std::move(c)), optima(std::move(mu)) {
  if (curvatures.empty()) throw ConfigError("quadratic tasks: need at least one task");
  if (curvatures.size() != optima.size()) throw ConfigError("quadratic tasks: one optimum per curvature required");
  for (std::size_t i = 0; i < curvatures.size(); ++i) {
    if (!(curvatures[i] > 0.0) || !std::isfinite(curvatures[i])) {
      throw ConfigError("quadratic tasks: curvature " + std::to_string(i) + " must be finite and > 0");
    }
    if (optima[i].empty() || optima[i].size() != optima.front().size()) {
      throw ConfigError("quadratic tasks: optima must share one positive dimension");
    }
  }
}

QuadraticTaskSet QuadraticTaskSet::centered(std::vector<double> curvatures, std::size_t dim) {
  std::vector<std::vector<double>> optima(curvatures.size(), std::vector<double>(dim, 0.0));
  return QuadraticTaskSet(std::move(curvatures), std::move(optima));
}

LossAndGrad quadratic_loss_and_grad(const QuadraticTaskSet& tasks, std::span<const double> theta, std::size_t task) {
  if (task >= tasks.task_count()) throw Error("quadratic task index " + std::to_string(task) + " out of range");
  if (theta.size() != tasks.dim()) {
    throw ShapeError("quadratic: theta has dimension " + std::to_string(theta.size()) + ", tasks use " +
                     std::to_string(tasks.dim()));
  }
  const double c = tasks.curvatures[task];
  LossAndGrad out;
  out.grad.resize(theta.size());
  double sq = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double d = theta[j] - tasks.optima[task][j];
    sq += d * d;
    out.grad[j] = c * d;
  }
  out.loss = 0.5 * c * sq;
  return out;
}

}  // namespace mtl
