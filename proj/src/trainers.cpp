#include "mtl/trainers.hpp"

#include <cmath>
#include <sstream>

namespace mtl {

std::string_view trainer_name(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::kOrdinary: return "ordinary";
    case TrainerKind::kFixedWeight: return "fixed-weight";
    case TrainerKind::kSplitOnly: return "split-only";
    case TrainerKind::kProposed: return "proposed";
  }
  return "unknown";
}

TrainerKind parse_trainer_name(std::string_view name) {
  for (auto k : {TrainerKind::kOrdinary, TrainerKind::kFixedWeight, TrainerKind::kSplitOnly, TrainerKind::kProposed}) {
    if (trainer_name(k) == name) return k;
  }
  throw ConfigError("trainer: unknown kind '" + std::string(name) +
                    "' (expected ordinary, fixed-weight, split-only, proposed)");
}

void TrainerConfig::validate(std::size_t tasks) const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (kind == TrainerKind::kProposed || kind == TrainerKind::kSplitOnly) {
    if (!positive(alpha)) throw ConfigError("alpha: must be > 0 for the " + std::string(trainer_name(kind)) + " trainer");
    if (!positive(beta)) throw ConfigError("beta: must be > 0 for the " + std::string(trainer_name(kind)) + " trainer");
  } else if (!positive(head_step_size)) {
    throw ConfigError("head_step_size: must be > 0");
  }
  if (kind == TrainerKind::kFixedWeight) {
    if (loss_weights.size() != tasks) {
      throw ConfigError("loss_weights: fixed-weight trainer needs " + std::to_string(tasks) + " weights, got " +
                        std::to_string(loss_weights.size()));
    }
    for (double w : loss_weights) {
      if (!positive(w)) throw ConfigError("loss_weights: every weight must be > 0");
    }
  } else if (!loss_weights.empty()) {
    for (double w : loss_weights) {
      if (w != 1.0) throw ConfigError("loss_weights: only the fixed-weight trainer accepts weights other than 1");
    }
  }
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
}

double l2_norm(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

ParameterList TaskObjective::all_parameters() const {
  ParameterList out = shared_parameters();
  for (std::size_t i = 0; i < task_count(); ++i) {
    auto h = head_parameters(i);
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objectives

void ModelObjective::record_input() { digests_.push_back(batch_digest(batch_.x, batch_.labels)); }

TaskObjective::Pass ModelObjective::task_pass(Graph& g, std::size_t task) {
  record_input();
  Pass p;
  p.loss = model_.task_loss(g, batch_, task, &p.trunk_tap);
  return p;
}

std::vector<TaskObjective::Pass> ModelObjective::all_tasks_pass(Graph& g, bool freeze_shared) {
  record_input();
  std::vector<Pass> out(model_.task_count());
  if (freeze_shared) {
    Graph trunk_graph;
    const Tensor features = forward(trunk_graph, model_.trunk(), batch_.x).detached();
    for (std::size_t i = 0; i < out.size(); ++i) out[i].loss = model_.head_loss(g, features, batch_, i);
    return out;
  }
  const Tensor features = forward(g, model_.trunk(), batch_.x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].trunk_tap = ops::reshape(g, features, features.shape());
    out[i].loss = model_.head_loss(g, out[i].trunk_tap, batch_, i);
  }
  return out;
}

std::vector<std::uint64_t> ModelObjective::take_forward_digests() { return std::exchange(digests_, {}); }

QuadraticObjective::QuadraticObjective(QuadraticTaskSet tasks, std::vector<double> theta) : tasks_(std::move(tasks)) {
  if (theta.size() != tasks_.dim()) {
    throw ShapeError("quadratic objective: theta has dimension " + std::to_string(theta.size()) + ", tasks use " +
                     std::to_string(tasks_.dim()));
  }
  const std::size_t n = theta.size();
  theta_ = Tensor::from({n}, std::move(theta), true);
}

Tensor QuadraticObjective::loss_for(Graph& g, const Tensor& theta, std::size_t task) const {
  const Tensor mu = Tensor::from({tasks_.dim()}, tasks_.optima.at(task));
  const Tensor d = ops::sub(g, theta, mu);
  return ops::scale(g, ops::sum(g, ops::mul(g, d, d)), 0.5 * tasks_.curvatures[task]);
}

TaskObjective::Pass QuadraticObjective::task_pass(Graph& g, std::size_t task) { return {loss_for(g, theta_, task), {}}; }

std::vector<TaskObjective::Pass> QuadraticObjective::all_tasks_pass(Graph& g, bool freeze_shared) {
  const Tensor theta = freeze_shared ? theta_.detached() : theta_;
  std::vector<Pass> out;
  for (std::size_t i = 0; i < task_count(); ++i) out.push_back({loss_for(g, theta, i), {}});
  return out;
}

// ---------------------------------------------------------------------------
// Steps

namespace {

using Values = std::vector<std::vector<double>>;

void zero_all(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    if (t.requires_grad()) t.zero_grad();
  }
}

Values grads_of(const ParameterList& params) {
  Values out;
  for (const auto& p : params) out.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
  return out;
}

Values zeros_like(const ParameterList& params) {
  Values out;
  for (const auto& p : params) out.emplace_back(p.tensor.size(), 0.0);
  return out;
}

void accumulate(Values& into, const Values& add) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    for (std::size_t j = 0; j < into[i].size(); ++j) into[i][j] += add[i][j];
  }
}

double norm_of(const Values& v) {
  double acc = 0.0;
  for (const auto& a : v) {
    for (double x : a) acc += x * x;
  }
  return std::sqrt(acc);
}

/// params <- base - step * direction
void write_update(const ParameterList& params, const Values& base, double step, const Values& direction) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    auto v = t.mutable_data();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = base[i][j] - step * direction[i][j];
  }
}

void require_finite_loss(double loss, std::size_t task, const char* phase) {
  if (!std::isfinite(loss)) {
    throw NonFiniteError(std::string(phase) + ": task " + std::to_string(task) + " loss is non-finite");
  }
}

struct TaskGradient {
  double loss = 0.0;
  Values shared;
  double tap_norm = 0.0;
};

/// Gradient of one task's loss w.r.t. the shared parameters at their current values.
TaskGradient shared_gradient(TaskObjective& objective, const ParameterList& all, const ParameterList& shared,
                             std::size_t task, const char* phase) {
  zero_all(all);
  Graph g;
  auto pass = objective.task_pass(g, task);
  TaskGradient out;
  out.loss = pass.loss.item();
  require_finite_loss(out.loss, task, phase);
  g.backward(pass.loss);
  out.shared = grads_of(shared);
  out.tap_norm = pass.trunk_tap.defined() ? l2_norm(g.grad_of(pass.trunk_tap)) : norm_of(out.shared);
  zero_all(all);
  return out;
}

/// theta_t^i <- theta_t^i - step * grad_{theta_t^i} L_i with the shared parameters frozen.
void update_heads(TaskObjective& objective, const ParameterList& all, double step) {
  bool any_head = false;
  for (std::size_t i = 0; i < objective.task_count(); ++i) any_head = any_head || !objective.head_parameters(i).empty();
  if (!any_head) return;
  zero_all(all);
  Graph g;
  auto passes = objective.all_tasks_pass(g, true);
  Tensor root = passes[0].loss;
  require_finite_loss(root.item(), 0, "head update");
  for (std::size_t i = 1; i < passes.size(); ++i) {
    require_finite_loss(passes[i].loss.item(), i, "head update");
    root = ops::add(g, root, passes[i].loss);
  }
  g.backward(root);
  for (std::size_t i = 0; i < objective.task_count(); ++i) sgd_step(objective.head_parameters(i), step);
  zero_all(all);
}

template <typename Body>
StepOutcome guarded(TaskObjective& objective, Body&& body) {
  const ParameterList all = objective.all_parameters();
  const auto entry = SharedSnapshot::capture(all);
  objective.take_forward_digests();
  StepOutcome outcome;
  try {
    body(outcome, all);
  } catch (const NonFiniteError& e) {
    entry.restore(all);
    zero_all(all);
    objective.take_forward_digests();
    std::ostringstream msg;
    msg << "step aborted and rolled back: " << e.what() << "; losses so far:";
    for (double l : outcome.pre_losses) msg << ' ' << l;
    throw TrainingDiverged(msg.str(), outcome.pre_losses);
  }
  outcome.batch_digests = objective.take_forward_digests();
  return outcome;
}

void require_kind(const TrainerConfig& config, std::initializer_list<TrainerKind> kinds, const char* step) {
  for (auto k : kinds) {
    if (config.kind == k) return;
  }
  throw ConfigError(std::string(step) + ": trainer kind '" + std::string(trainer_name(config.kind)) +
                    "' does not use this step");
}

void require_step(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(name) + ": step size must be finite and >= 0");
}

void notify(const StepObserver& observer, StepPhase phase) {
  if (observer) observer(phase);
}

}  // namespace

StepOutcome ordinary_step(TaskObjective& objective, const TrainerConfig& config) {
  require_kind(config, {TrainerKind::kOrdinary, TrainerKind::kFixedWeight}, "ordinary_step");
  require_step(config.head_step_size, "head_step_size");
  const std::size_t tasks = objective.task_count();
  if (!config.loss_weights.empty() && config.loss_weights.size() != tasks) {
    throw ConfigError("loss_weights: expected " + std::to_string(tasks) + " weights");
  }
  return guarded(objective, [&](StepOutcome& out, const ParameterList& all) {
    zero_all(all);
    Graph g;
    auto passes = objective.all_tasks_pass(g, false);
    Tensor total;
    for (std::size_t i = 0; i < tasks; ++i) {
      const double loss = passes[i].loss.item();
      out.pre_losses.push_back(loss);
      require_finite_loss(loss, i, "ordinary step");
      Tensor weighted = ops::scale(g, passes[i].loss, config.weight(i));
      total = total.defined() ? ops::add(g, total, weighted) : weighted;
    }
    g.backward(total);
    for (std::size_t i = 0; i < tasks; ++i) {
      const double w = config.weight(i);
      if (passes[i].trunk_tap.defined()) {
        out.grad_norms.push_back(w > 0.0 ? l2_norm(g.grad_of(passes[i].trunk_tap)) / w : 0.0);
      } else {
        out.grad_norms.push_back(0.0);
      }
    }
    sgd_step(all, config.head_step_size);
    zero_all(all);
  });
}

StepOutcome split_only_step(TaskObjective& objective, const TrainerConfig& config, const StepObserver& observer) {
  require_kind(config, {TrainerKind::kSplitOnly}, "split_only_step");
  require_step(config.alpha, "alpha");
  require_step(config.beta, "beta");
  return guarded(objective, [&](StepOutcome& out, const ParameterList& all) {
    const ParameterList shared = objective.shared_parameters();
    const auto base = SharedSnapshot::capture(shared);
    Values total = zeros_like(shared);
    for (std::size_t i = 0; i < objective.task_count(); ++i) {
      auto tg = shared_gradient(objective, all, shared, i, "split-only shared gradient");
      out.pre_losses.push_back(tg.loss);
      out.grad_norms.push_back(tg.tap_norm);
      out.shared_grad_norms_pre.push_back(norm_of(tg.shared));
      accumulate(total, tg.shared);
    }
    notify(observer, StepPhase::kInnerGradients);
    write_update(shared, base.values(), config.beta, total);
    notify(observer, StepPhase::kSharedUpdate);
    update_heads(objective, all, config.alpha);
    notify(observer, StepPhase::kHeadUpdate);
  });
}

StepOutcome proposed_step(TaskObjective& objective, const TrainerConfig& config, const StepObserver& observer) {
  require_kind(config, {TrainerKind::kProposed}, "proposed_step");
  require_step(config.alpha, "alpha");
  require_step(config.beta, "beta");
  return guarded(objective, [&](StepOutcome& out, const ParameterList& all) {
    const ParameterList shared = objective.shared_parameters();
    const std::size_t tasks = objective.task_count();
    // 1. snapshot theta_s
    const auto base = SharedSnapshot::capture(shared);

    // 2. g_i at theta_s with heads fixed
    std::vector<Values> inner(tasks);
    for (std::size_t i = 0; i < tasks; ++i) {
      auto tg = shared_gradient(objective, all, shared, i, "inner gradient");
      out.pre_losses.push_back(tg.loss);
      out.grad_norms.push_back(tg.tap_norm);
      out.shared_grad_norms_pre.push_back(norm_of(tg.shared));
      inner[i] = std::move(tg.shared);
    }
    notify(observer, StepPhase::kInnerGradients);

    // 3. h_i = grad L_i at theta_s^i = theta_s - alpha g_i, same batch, first order
    Values outer = zeros_like(shared);
    for (std::size_t i = 0; i < tasks; ++i) {
      write_update(shared, base.values(), config.alpha, inner[i]);
      auto tg = shared_gradient(objective, all, shared, i, "outer gradient");
      base.restore(shared);
      out.post_losses.push_back(tg.loss);
      out.shared_grad_norms_post.push_back(norm_of(tg.shared));
      accumulate(outer, tg.shared);
    }
    notify(observer, StepPhase::kInnerLosses);

    // 4. theta_s <- theta_s - beta sum_i h_i
    write_update(shared, base.values(), config.beta, outer);
    notify(observer, StepPhase::kSharedUpdate);

    // 5. heads against the updated theta_s
    update_heads(objective, all, config.alpha);
    notify(observer, StepPhase::kHeadUpdate);
  });
}

StepOutcome train_step(TaskObjective& objective, const TrainerConfig& config) {
  switch (config.kind) {
    case TrainerKind::kOrdinary:
    case TrainerKind::kFixedWeight: return ordinary_step(objective, config);
    case TrainerKind::kSplitOnly: return split_only_step(objective, config);
    case TrainerKind::kProposed: return proposed_step(objective, config);
  }
  throw ConfigError("unknown trainer kind");
}

StepOutcome ordinary_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config) {
  ModelObjective obj(model, batch);
  return ordinary_step(obj, config);
}

StepOutcome split_only_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config) {
  ModelObjective obj(model, batch);
  return split_only_step(obj, config);
}

StepOutcome proposed_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config) {
  ModelObjective obj(model, batch);
  return proposed_step(obj, config);
}

StepOutcome train_step(MultitaskModel& model, const MultiTaskBatch& batch, const TrainerConfig& config) {
  ModelObjective obj(model, batch);
  return train_step(obj, config);
}

}  // namespace mtl
