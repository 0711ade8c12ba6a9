#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtl/error.hpp"
#include "mtl/model.hpp"
#include "mtl/quadratic.hpp"

namespace mtl {

enum class TrainerKind { kOrdinary, kFixedWeight, kSplitOnly, kProposed };

std::string_view trainer_name(TrainerKind kind);
TrainerKind parse_trainer_name(std::string_view name);

struct TrainerConfig {
  TrainerKind kind = TrainerKind::kProposed;
  double alpha = 0.001;           // inner (temporary) shared step; head step for split-only/proposed
  double beta = 0.001;            // outer shared step
  double head_step_size = 0.001;  // ordinary / fixed-weight step for every parameter
  std::vector<double> loss_weights;  // fixed-weight only; empty means all ones
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate(std::size_t tasks) const;
  double weight(std::size_t task) const { return loss_weights.empty() ? 1.0 : loss_weights.at(task); }
};

struct StepOutcome {
  /// L_i(f_{theta_s, theta_t^i}) at step entry.
  std::vector<double> pre_losses;
  /// L_i(f_{theta_s^i, theta_t^i}) after the temporary update; proposed trainer only.
  std::vector<double> post_losses;
  /// ||dL_i / d(trunk output)|| at step entry (shared-gradient norm when the objective has no trunk output).
  std::vector<double> grad_norms;
  /// ||grad_{theta_s} L_i|| at step entry; split-only and proposed.
  std::vector<double> shared_grad_norms_pre;
  /// ||grad L_i|| at theta_s^i; proposed only.
  std::vector<double> shared_grad_norms_post;
  /// Digest of the batch consumed by every forward pass in the step.
  std::vector<std::uint64_t> batch_digests;
};

/// A step aborted on a non-finite value; parameters were rolled back to step entry.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> losses) : Error(what), losses_(std::move(losses)) {}
  const std::vector<double>& losses() const { return losses_; }

 private:
  std::vector<double> losses_;
};

/// The trainers' view of a multitask problem: shared parameters, per-task
/// head parameters, and per-task scalar losses built on a graph.
class TaskObjective {
 public:
  struct Pass {
    Tensor loss;
    Tensor trunk_tap;  // may be undefined
  };

  virtual ~TaskObjective() = default;
  virtual std::size_t task_count() const = 0;
  virtual ParameterList shared_parameters() const = 0;
  virtual ParameterList head_parameters(std::size_t task) const = 0;

  /// One task's loss; gradients reach the shared parameters and that task's head.
  virtual Pass task_pass(Graph& g, std::size_t task) = 0;
  /// Every task's loss on one graph with a single shared evaluation. With
  /// `freeze_shared` no gradient reaches the shared parameters.
  virtual std::vector<Pass> all_tasks_pass(Graph& g, bool freeze_shared) = 0;

  /// Digests of the data consumed by each forward since the last call.
  virtual std::vector<std::uint64_t> take_forward_digests() { return {}; }

  ParameterList all_parameters() const;
};

/// Multitask network evaluated on one fixed mini-batch.
class ModelObjective final : public TaskObjective {
 public:
  ModelObjective(const MultitaskModel& model, const MultiTaskBatch& batch) : model_(model), batch_(batch) {}
  // Holds references; temporaries would dangle.
  ModelObjective(const MultitaskModel&&, const MultiTaskBatch&) = delete;
  ModelObjective(const MultitaskModel&, const MultiTaskBatch&&) = delete;

  std::size_t task_count() const override { return model_.task_count(); }
  ParameterList shared_parameters() const override { return model_.partition().shared; }
  ParameterList head_parameters(std::size_t task) const override { return model_.partition().heads.at(task); }
  Pass task_pass(Graph& g, std::size_t task) override;
  std::vector<Pass> all_tasks_pass(Graph& g, bool freeze_shared) override;
  std::vector<std::uint64_t> take_forward_digests() override;

 private:
  void record_input();
  const MultitaskModel& model_;
  const MultiTaskBatch& batch_;
  std::vector<std::uint64_t> digests_;
};

/// Quadratic tasks sharing one parameter vector; heads are empty.
class QuadraticObjective final : public TaskObjective {
 public:
  QuadraticObjective(QuadraticTaskSet tasks, std::vector<double> theta);

  std::size_t task_count() const override { return tasks_.task_count(); }
  ParameterList shared_parameters() const override { return {{"theta", theta_}}; }
  ParameterList head_parameters(std::size_t) const override { return {}; }
  Pass task_pass(Graph& g, std::size_t task) override;
  std::vector<Pass> all_tasks_pass(Graph& g, bool freeze_shared) override;

  const QuadraticTaskSet& tasks() const { return tasks_; }
  std::span<const double> theta() const { return theta_.data(); }
  Tensor theta_tensor() const { return theta_; }

 private:
  Tensor loss_for(Graph& g, const Tensor& theta, std::size_t task) const;
  QuadraticTaskSet tasks_;
  Tensor theta_;
};

enum class StepPhase { kInnerGradients, kInnerLosses, kSharedUpdate, kHeadUpdate };

/// Called after each phase of split_only_step / proposed_step; for tests and instrumentation.
using StepObserver = std::function<void(StepPhase)>;

/// One SGD step on sum_i w_i L_i over every parameter (w_i = 1 for ordinary).
StepOutcome ordinary_step(TaskObjective& objective, const TrainerConfig& config);
/// Shared update with beta on the summed task gradients, then per-head updates with alpha.
StepOutcome split_only_step(TaskObjective& objective, const TrainerConfig& config, const StepObserver& observer = {});
/// Single-gradient-step update: temporary per-task shared updates (alpha), first-order
/// outer update of the shared parameters (beta), then per-head updates (alpha).
StepOutcome proposed_step(TaskObjective& objective, const TrainerConfig& config, const StepObserver& observer = {});
/// Dispatches on config.kind.
StepOutcome train_step(TaskObjective& objective, const TrainerConfig& config);

StepOutcome ordinary_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config);
StepOutcome split_only_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config);
StepOutcome proposed_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config);
StepOutcome train_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config);

double l2_norm(std::span<const double> values);

}  // namespace mtl
