#pragma once

#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mtl/metrics.hpp"
#include "mtl/run_config.hpp"

namespace mtl {

// Process exit codes; a stable contract for scripts.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

inline constexpr const char* kArchitectureTag = "overlay-lenet-2task-v1";

struct SourcePair {
  LabeledImages a;
  LabeledImages b;
};

/// Reads the configured IDX files, or draws the synthetic glyph set (used for both sources).
SourcePair load_sources(const RunConfig& config);

/// Loads the overlay dataset from the cache, composing and storing it on a miss.
OverlayDataset prepare_dataset(const RunConfig& config);
std::filesystem::path dataset_cache_dir(const RunConfig& config, const nlohmann::json& manifest);

/// Fresh reference model for a run; weights depend on the trainer seed only.
MultitaskModel initial_model(const RunConfig& config);

using LogFn = std::function<void(const std::string&)>;

struct RunOptions {
  bool resume = false;
  LogFn log;
  /// Stop as if killed after this many epochs (0: never). Leaves the sentinel in place.
  std::size_t interrupt_after_epoch = 0;
};

struct RunResult {
  int exit_code = kExitOk;
  nlohmann::json summary;  // empty for an interrupted run
};

// Run directory layout.
inline constexpr const char* kConfigEcho = "config.txt";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kLastCheckpoint = "last.ckpt";
inline constexpr const char* kStateFile = "state.json";
inline constexpr const char* kSentinel = "RUNNING";

/// Trains until early stop or the epoch cap and writes the run artifacts into
/// config.out_dir. Config errors throw ConfigError; divergence returns kExitDiverged.
RunResult run_training(const RunConfig& config, const RunOptions& options = {});

/// Loads `checkpoint` into the reference architecture and evaluates one split.
/// Throws CheckpointMismatch / FormatError on a bad checkpoint.
EvalReport evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& checkpoint, SplitName split);

struct QuadraticDemoConfig {
  std::vector<double> curvatures{4.0, 1.0};
  double alpha = 0.1;
  double beta = 0.01;
  std::size_t steps = 20;
  double theta0 = 1.0;
};

struct QuadraticDemoRow {
  std::string regime;  // "direct" or "single_step"
  std::size_t step = 0;
  double theta = 0.0;  // theta_s at step entry
  std::size_t task = 0;
  double grad_pre = 0.0;
  double grad_post = 0.0;
  double factor = 0.0;       // grad_post / grad_pre
  double ratio = 0.0;        // max/min magnitude across tasks of the gradient that drives the update
};

inline constexpr const char* kQuadraticCsvHeader = "regime,step,theta,task,grad_pre,grad_post,factor,ratio";

/// Scalar quadratic tasks with optima at 0. The direct regime applies beta * sum of
/// pre-step gradients; the single-step regime runs the proposed trainer.
/// Rejects curvatures <= 0 and alpha * c >= 1.
std::vector<QuadraticDemoRow> quadratic_demo(const QuadraticDemoConfig& config);
std::string quadratic_demo_csv(const std::vector<QuadraticDemoRow>& rows);

}  // namespace mtl
