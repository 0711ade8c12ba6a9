#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mtl/model.hpp"
#include "mtl/overlay.hpp"
#include "mtl/trainers.hpp"

namespace mtl {

struct LossRatioRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::vector<double> pre_losses;
  std::vector<double> post_losses;  // empty unless the trainer reports them
  std::vector<double> grad_norms;
  double ratio_pre = 0.0;             // L_1 / sum_i L_i
  std::optional<double> ratio_post;   // same ratio over post-inner-step losses

  /// L_task / sum_i L_i for either loss list.
  double task_ratio(std::size_t task, bool post) const;
};

/// Per-step share of task 1 in the total loss, before and after the temporary update.
class LossRatioTrace {
 public:
  /// Appends one record; a zero total loss skips the record and counts it instead.
  /// Returns the appended record or nullptr when skipped.
  const LossRatioRecord* record_step(const StepOutcome& outcome, std::size_t epoch);

  const std::vector<LossRatioRecord>& records() const { return records_; }
  std::size_t skipped() const { return skipped_; }
  std::size_t steps_seen() const { return next_step_; }

  /// Mean |ratio - 0.5| over all records (post uses records that have a post ratio).
  double mean_abs_deviation_pre() const;
  double mean_abs_deviation_post() const;

 private:
  std::vector<LossRatioRecord> records_;
  std::size_t skipped_ = 0;
  std::size_t next_step_ = 0;
};

void record_step(LossRatioTrace& trace, const StepOutcome& outcome, std::size_t epoch = 0);

inline constexpr const char* kMetricsCsvHeader = "step,epoch,task,loss_pre,loss_post,ratio_pre,ratio_post,grad_norm";

/// One CSV row per task for a record, newline-terminated, %.17g numbers, empty cells for absent values.
std::string metrics_csv_rows(const LossRatioRecord& record);
void write_metrics_csv(std::ostream& out, const LossRatioTrace& trace);

struct EvalReport {
  std::string split;
  std::vector<double> accuracy;   // percent
  std::vector<double> mean_loss;
  std::size_t samples = 0;

  double min_accuracy() const;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Accuracy is 100 * argmax hits / N per task; mean loss sums sorted per-sample
/// losses so the report does not depend on sample order.
EvalReport evaluate(const MultitaskModel& model, const DatasetSplit& split, std::string split_name = "eval",
                    std::size_t batch_size = 256);

/// Unweighted mean of per-task mean losses.
double validation_objective(const EvalReport& report);

enum class StopDecision { kContinue, kStop };

struct EarlyStopState {
  std::size_t patience = 10;
  double best = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;
  std::size_t best_epoch = 0;
  std::string best_checkpoint;
  bool improved_last = false;

  EarlyStopState() = default;
  /// `baseline` is the objective before any training (epoch 0).
  explicit EarlyStopState(std::size_t patience, double baseline = std::numeric_limits<double>::infinity(),
                          std::string baseline_checkpoint = {});
};

/// Strict improvement resets the counter and moves the best checkpoint reference;
/// stops once epochs without improvement exceed the patience. Non-finite
/// objectives count as no improvement.
StopDecision early_stop_update(EarlyStopState& state, double val_objective, std::size_t epoch,
                               const std::string& checkpoint = {});

nlohmann::json to_json(const EarlyStopState& state);
EarlyStopState early_stop_from_json(const nlohmann::json& j);

}  // namespace mtl
