#pragma once

#include <cstdint>
#include <vector>

#include "mtl/layers.hpp"
#include "mtl/overlay.hpp"

namespace mtl {

enum class LossKind { kSoftmaxCrossEntropy, kL1 };

/// Shared parameters theta_s and one parameter list per task head theta_t^i.
struct ParamPartition {
  ParameterList shared;
  std::vector<ParameterList> heads;
};

/// Shared trunk followed by T task heads.
class MultitaskModel {
 public:
  MultitaskModel(Sequential trunk, std::vector<Sequential> heads, std::vector<LossKind> losses);

  /// Reference LeNet-style model for 36x36 overlay images, all heads cross-entropy.
  static MultitaskModel reference(std::size_t tasks, std::uint64_t seed, std::size_t classes = 10);

  std::size_t task_count() const { return heads_.size(); }
  const Sequential& trunk() const { return trunk_; }
  const Sequential& head(std::size_t task) const;
  LossKind loss_kind(std::size_t task) const;

  /// Head output for `task`. When `trunk_tap` is given it receives the trunk
  /// output as seen by this head, so Graph::grad_of can read the per-task
  /// gradient reaching the trunk.
  Tensor forward_task(Graph& g, const Tensor& x, std::size_t task, Tensor* trunk_tap = nullptr) const;
  Tensor forward_head(Graph& g, const Tensor& features, std::size_t task) const;

  /// Mean task loss over the batch.
  Tensor task_loss(Graph& g, const MultiTaskBatch& batch, std::size_t task, Tensor* trunk_tap = nullptr) const;
  Tensor head_loss(Graph& g, const Tensor& features, const MultiTaskBatch& batch, std::size_t task) const;

  /// Trunk parameters ("trunk.*") followed by each head ("head<i>.*").
  ParameterList parameters() const;
  ParamPartition partition() const;

  /// Deep copy with independent parameter storage.
  MultitaskModel clone() const;

 private:
  Sequential trunk_;
  std::vector<Sequential> heads_;
  std::vector<LossKind> losses_;
};

ParamPartition partition_params(const MultitaskModel& model);

/// Deep copy of parameter values; restore() makes them bit-identical to capture time.
class SharedSnapshot {
 public:
  static SharedSnapshot capture(std::span<const Parameter> params);
  void restore(std::span<const Parameter> params) const;
  const std::vector<std::vector<double>>& values() const { return values_; }

 private:
  std::vector<std::vector<double>> values_;
};

}  // namespace mtl
