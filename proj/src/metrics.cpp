#include "mtl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "mtl/error.hpp"

namespace mtl {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double sum_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

double LossRatioRecord::task_ratio(std::size_t task, bool post) const {
  const auto& losses = post ? post_losses : pre_losses;
  return losses.at(task) / sum_of(losses);
}

const LossRatioRecord* LossRatioTrace::record_step(const StepOutcome& outcome, std::size_t epoch) {
  if (outcome.pre_losses.size() < 2) throw Error("record_step: need at least two task losses");
  const std::size_t step = next_step_++;
  const double total = sum_of(outcome.pre_losses);
  if (!(total > 0.0)) {
    ++skipped_;
    return nullptr;
  }
  LossRatioRecord r;
  r.step = step;
  r.epoch = epoch;
  r.pre_losses = outcome.pre_losses;
  r.post_losses = outcome.post_losses;
  r.grad_norms = outcome.grad_norms;
  r.ratio_pre = outcome.pre_losses[0] / total;
  if (outcome.post_losses.size() == outcome.pre_losses.size()) {
    const double post_total = sum_of(outcome.post_losses);
    if (post_total > 0.0) r.ratio_post = outcome.post_losses[0] / post_total;
  }
  records_.push_back(std::move(r));
  return &records_.back();
}

double LossRatioTrace::mean_abs_deviation_pre() const {
  if (records_.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : records_) acc += std::abs(r.ratio_pre - 0.5);
  return acc / static_cast<double>(records_.size());
}

double LossRatioTrace::mean_abs_deviation_post() const {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : records_) {
    if (!r.ratio_post) continue;
    acc += std::abs(*r.ratio_post - 0.5);
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

void record_step(LossRatioTrace& trace, const StepOutcome& outcome, std::size_t epoch) {
  trace.record_step(outcome, epoch);
}

std::string metrics_csv_rows(const LossRatioRecord& r) {
  std::string out;
  const bool has_post = r.post_losses.size() == r.pre_losses.size() && r.ratio_post.has_value();
  for (std::size_t t = 0; t < r.pre_losses.size(); ++t) {
    out += std::to_string(r.step) + ',' + std::to_string(r.epoch) + ',' + std::to_string(t + 1) + ',';
    out += fmt_double(r.pre_losses[t]) + ',';
    out += (r.post_losses.size() > t ? fmt_double(r.post_losses[t]) : std::string()) + ',';
    out += fmt_double(r.task_ratio(t, false)) + ',';
    out += (has_post ? fmt_double(r.task_ratio(t, true)) : std::string()) + ',';
    out += (r.grad_norms.size() > t ? fmt_double(r.grad_norms[t]) : std::string()) + '\n';
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const LossRatioTrace& trace) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : trace.records()) out << metrics_csv_rows(r);
}

double EvalReport::min_accuracy() const {
  return accuracy.empty() ? 0.0 : *std::min_element(accuracy.begin(), accuracy.end());
}

nlohmann::json to_json(const EvalReport& report) {
  return {{"split", report.split},
          {"accuracy", report.accuracy},
          {"mean_loss", report.mean_loss},
          {"samples", report.samples}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.split = j.at("split").get<std::string>();
  r.accuracy = j.at("accuracy").get<std::vector<double>>();
  r.mean_loss = j.at("mean_loss").get<std::vector<double>>();
  r.samples = j.at("samples").get<std::size_t>();
  return r;
}

EvalReport evaluate(const MultitaskModel& model, const DatasetSplit& split, std::string split_name,
                    std::size_t batch_size) {
  if (split.size() == 0) throw Error("evaluate: split '" + split_name + "' is empty");
  if (batch_size == 0) throw Error("evaluate: batch size must be positive");
  const std::size_t tasks = model.task_count();
  std::vector<std::size_t> hits(tasks, 0);
  std::vector<std::vector<double>> losses(tasks);
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    indices.clear();
    for (std::size_t i = start; i < std::min(split.size(), start + batch_size); ++i) indices.push_back(i);
    const MultiTaskBatch batch = make_batch(split, indices);
    Graph g;
    const Tensor features = forward(g, model.trunk(), batch.x);
    for (std::size_t t = 0; t < tasks; ++t) {
      const Tensor logits = model.forward_head(g, features, t);
      const std::size_t classes = logits.dim(1);
      auto z = logits.data();
      for (std::size_t b = 0; b < indices.size(); ++b) {
        const double* row = z.data() + b * classes;
        const std::size_t pred = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
        const auto label = static_cast<std::size_t>(batch.labels[t][b]);
        if (label >= classes) throw Error("evaluate: label " + std::to_string(label) + " outside class range");
        if (pred == label) ++hits[t];
        const double m = row[pred];
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - m);
        losses[t].push_back(m + std::log(denom) - row[label]);
      }
    }
  }
  EvalReport report;
  report.split = std::move(split_name);
  report.samples = split.size();
  for (std::size_t t = 0; t < tasks; ++t) {
    report.accuracy.push_back(100.0 * static_cast<double>(hits[t]) / static_cast<double>(split.size()));
    std::sort(losses[t].begin(), losses[t].end());
    double acc = 0.0;
    for (double l : losses[t]) acc += l;
    report.mean_loss.push_back(acc / static_cast<double>(split.size()));
  }
  return report;
}

double validation_objective(const EvalReport& report) {
  if (report.mean_loss.empty()) throw Error("validation_objective: report has no tasks");
  return sum_of(report.mean_loss) / static_cast<double>(report.mean_loss.size());
}

EarlyStopState::EarlyStopState(std::size_t patience_, double baseline, std::string baseline_checkpoint)
    : patience(patience_), best(std::isfinite(baseline) ? baseline : std::numeric_limits<double>::infinity()),
      best_checkpoint(std::move(baseline_checkpoint)) {}

StopDecision early_stop_update(EarlyStopState& state, double val_objective, std::size_t epoch,
                               const std::string& checkpoint) {
  state.improved_last = std::isfinite(val_objective) && val_objective < state.best;
  if (state.improved_last) {
    state.best = val_objective;
    state.best_epoch = epoch;
    state.best_checkpoint = checkpoint;
    state.epochs_since_improvement = 0;
  } else {
    ++state.epochs_since_improvement;
  }
  return state.epochs_since_improvement > state.patience ? StopDecision::kStop : StopDecision::kContinue;
}

nlohmann::json to_json(const EarlyStopState& s) {
  return {{"patience", s.patience},
          {"best", std::isfinite(s.best) ? nlohmann::json(s.best) : nlohmann::json(nullptr)},
          {"epochs_since_improvement", s.epochs_since_improvement},
          {"best_epoch", s.best_epoch},
          {"best_checkpoint", s.best_checkpoint}};
}

EarlyStopState early_stop_from_json(const nlohmann::json& j) {
  EarlyStopState s;
  s.patience = j.at("patience").get<std::size_t>();
  s.best = j.at("best").is_null() ? std::numeric_limits<double>::infinity() : j.at("best").get<double>();
  s.epochs_since_improvement = j.at("epochs_since_improvement").get<std::size_t>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.best_checkpoint = j.at("best_checkpoint").get<std::string>();
  return s;
}

}  // namespace mtl
