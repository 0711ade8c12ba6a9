#include "mtl/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mtl/checkpoint.hpp"
#include "mtl/digest.hpp"
#include "mtl/error.hpp"
#include "mtl/glyphs.hpp"
#include "mtl/random.hpp"

namespace fs = std::filesystem;

namespace mtl {

namespace {

LabeledImages load_idx_source(const std::vector<std::string>& images, const std::vector<std::string>& labels,
                              const std::string& name) {
  LabeledImages out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    LabeledImages part = labeled_images_from_idx(read_idx(images[i]), read_idx(labels[i]), name);
    if (i == 0) {
      out = std::move(part);
    } else {
      out.append(part);
    }
  }
  out.name = name;
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json checkpoint_metadata(const RunConfig& config, std::size_t epoch) {
  return {{"architecture", kArchitectureTag},
          {"tasks", 2},
          {"trainer", std::string(trainer_name(config.trainer.kind))},
          {"epoch", epoch}};
}

// Running sums behind the summary's balance statistics; survives resume via state.json.
struct BalanceSums {
  double abs_dev_pre = 0.0;
  std::size_t count_pre = 0;
  double abs_dev_post = 0.0;
  std::size_t count_post = 0;
  std::size_t skipped = 0;
};

nlohmann::json to_json(const BalanceSums& s) {
  return {{"abs_dev_pre", s.abs_dev_pre},
          {"count_pre", s.count_pre},
          {"abs_dev_post", s.abs_dev_post},
          {"count_post", s.count_post},
          {"skipped", s.skipped}};
}

BalanceSums balance_from_json(const nlohmann::json& j) {
  return {j.at("abs_dev_pre").get<double>(), j.at("count_pre").get<std::size_t>(), j.at("abs_dev_post").get<double>(),
          j.at("count_post").get<std::size_t>(), j.at("skipped").get<std::size_t>()};
}

nlohmann::json balance_summary(const BalanceSums& s) {
  nlohmann::json j = {{"steps_recorded", s.count_pre}, {"steps_skipped", s.skipped}};
  j["mean_abs_dev_pre"] = s.count_pre ? nlohmann::json(s.abs_dev_pre / static_cast<double>(s.count_pre)) : nlohmann::json(nullptr);
  j["mean_abs_dev_post"] = s.count_post ? nlohmann::json(s.abs_dev_post / static_cast<double>(s.count_post)) : nlohmann::json(nullptr);
  return j;
}

// Keeps the header and the rows of epochs <= last_epoch.
void truncate_metrics(const fs::path& path, std::size_t last_epoch) {
  std::istringstream in(read_text(path));
  std::string out, line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      out += line + "\n";
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) break;  // torn row
    if (std::stoull(line.substr(c1 + 1, c2 - c1 - 1)) > last_epoch) break;
    out += line + "\n";
  }
  write_text_atomic(path, out);
}

}  // namespace

SourcePair load_sources(const RunConfig& config) {
  if (config.dataset == DatasetKind::kSynthetic) {
    LabeledImages glyphs = make_glyph_set(config.synthetic_pool, derive_seed(config.dataset_seed, 7));
    glyphs.name = "glyphs-" + std::to_string(config.synthetic_pool) + "-" + std::to_string(config.dataset_seed);
    return {glyphs, glyphs};
  }
  SourcePair pair;
  pair.a = load_idx_source(config.source_a_images, config.source_a_labels, "idx-a");
  if (config.source_b_images.empty()) {
    pair.b = pair.a;
  } else {
    pair.b = load_idx_source(config.source_b_images, config.source_b_labels, "idx-b");
  }
  return pair;
}

fs::path dataset_cache_dir(const RunConfig& config, const nlohmann::json& manifest) {
  const std::string text = manifest.dump();
  Fnv1a h;
  h.update_values(std::span<const char>(text));
  return resolve_cache_root(config) / ("overlay-" + hex_digest(h.value()));
}

OverlayDataset prepare_dataset(const RunConfig& config) {
  const SourcePair sources = load_sources(config);
  const nlohmann::json manifest = overlay_manifest(sources.a, sources.b, config.sizes, config.dataset_seed);
  return load_or_build_cache(dataset_cache_dir(config, manifest), manifest, [&] {
    return build_overlay_dataset(sources.a, sources.b, config.sizes, config.dataset_seed);
  });
}

MultitaskModel initial_model(const RunConfig& config) {
  return MultitaskModel::reference(2, derive_seed(config.trainer.seed, 1));
}

RunResult run_training(const RunConfig& config, const RunOptions& options) {
  validate_run_config(config);
  const auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  const auto started = std::chrono::steady_clock::now();
  const fs::path out = config.out_dir;
  fs::create_directories(out);

  const bool resuming = options.resume && fs::exists(out / kStateFile) && fs::exists(out / kLastCheckpoint);
  if (options.resume && fs::exists(out / kConfigEcho)) {
    const RunConfig previous = parse_run_config(read_text(out / kConfigEcho));
    if (!(previous == config)) throw ConfigError("resume: config differs from " + (out / kConfigEcho).string());
    if (!fs::exists(out / kSentinel) && fs::exists(out / kSummaryFile)) {
      log("run already complete");
      return {kExitOk, nlohmann::json::parse(read_text(out / kSummaryFile))};
    }
  }

  write_text_atomic(out / kSentinel, "");
  if (!resuming) {
    for (const char* name : {kMetricsFile, kSummaryFile, kBestCheckpoint, kLastCheckpoint, kStateFile}) {
      fs::remove(out / name);
    }
  }
  write_text_atomic(out / kConfigEcho, serialize_run_config(config));

  const OverlayDataset data = prepare_dataset(config);
  const DatasetSplit& train = data.split(SplitName::kTrain);
  const DatasetSplit& val = data.split(SplitName::kValidation);
  log("dataset: " + std::to_string(train.size()) + "/" + std::to_string(val.size()) + "/" +
      std::to_string(data.split(SplitName::kTest).size()));

  MultitaskModel model = initial_model(config);
  const ParameterList params = model.parameters();
  EarlyStopState stop;
  BalanceSums balance;
  std::size_t start_epoch = 1;
  std::size_t global_step = 0;

  if (resuming) {
    const auto state = nlohmann::json::parse(read_text(out / kStateFile));
    load_into(read_checkpoint(out / kLastCheckpoint), params);
    stop = early_stop_from_json(state.at("early_stop"));
    balance = balance_from_json(state.at("balance"));
    start_epoch = state.at("epoch").get<std::size_t>() + 1;
    global_step = state.at("steps").get<std::size_t>();
    truncate_metrics(out / kMetricsFile, start_epoch - 1);
    log("resuming after epoch " + std::to_string(start_epoch - 1));
  } else {
    const EvalReport baseline = evaluate(model, val, "validation");
    stop = EarlyStopState(config.patience, validation_objective(baseline), kBestCheckpoint);
    write_checkpoint(out / kBestCheckpoint, params, checkpoint_metadata(config, 0));
    write_text_atomic(out / kMetricsFile, std::string(kMetricsCsvHeader) + "\n");
  }

  nlohmann::json status = "completed";
  std::size_t last_epoch = start_epoch - 1;
  bool stopped_early = false;
  // A completed resume state may already have decided to stop.
  const bool already_stopped = resuming && stop.epochs_since_improvement > stop.patience;

  for (std::size_t epoch = start_epoch; epoch <= config.epochs && !already_stopped; ++epoch) {
    Rng rng(derive_seed(config.trainer.seed, 100 + epoch));
    LossRatioTrace trace;
    std::string rows;
    try {
      for (const auto& indices : epoch_batches(train.size(), config.trainer.batch_size, rng)) {
        const MultiTaskBatch batch = make_batch(train, indices);
        const StepOutcome outcome = train_step(model, batch, config.trainer);
        ++global_step;
        const LossRatioRecord* rec = trace.record_step(outcome, epoch);
        if (!rec) {
          ++balance.skipped;
          continue;
        }
        LossRatioRecord numbered = *rec;
        numbered.step = global_step;
        rows += metrics_csv_rows(numbered);
        balance.abs_dev_pre += std::abs(rec->ratio_pre - 0.5);
        ++balance.count_pre;
        if (rec->ratio_post) {
          balance.abs_dev_post += std::abs(*rec->ratio_post - 0.5);
          ++balance.count_post;
        }
      }
    } catch (const TrainingDiverged& e) {
      log(std::string("diverged: ") + e.what());
      {
        std::ofstream csv(out / kMetricsFile, std::ios::app);
        csv << rows;
      }
      nlohmann::json summary = {{"status", "diverged"},
                                {"message", e.what()},
                                {"epoch", epoch},
                                {"steps", global_step},
                                {"best_checkpoint", kBestCheckpoint},
                                {"best_epoch", stop.best_epoch}};
      write_text_atomic(out / kSummaryFile, summary.dump(2) + "\n");
      return {kExitDiverged, summary};
    }
    {
      std::ofstream csv(out / kMetricsFile, std::ios::app);
      csv << rows;
      if (!csv) throw Error("cannot append to " + (out / kMetricsFile).string());
    }
    const EvalReport val_report = evaluate(model, val, "validation");
    const double objective = validation_objective(val_report);
    const StopDecision decision = early_stop_update(stop, objective, epoch, kBestCheckpoint);
    if (stop.improved_last) write_checkpoint(out / kBestCheckpoint, params, checkpoint_metadata(config, epoch));
    write_checkpoint(out / kLastCheckpoint, params, checkpoint_metadata(config, epoch));
    write_text_atomic(out / kStateFile, nlohmann::json{{"epoch", epoch},
                                                       {"steps", global_step},
                                                       {"early_stop", to_json(stop)},
                                                       {"balance", to_json(balance)}}
                                                .dump(2) +
                                            "\n");
    last_epoch = epoch;
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu: val objective %.6f, accuracy %.2f/%.2f%s", epoch, objective,
                  val_report.accuracy[0], val_report.accuracy[1], stop.improved_last ? " *" : "");
    log(line);
    if (decision == StopDecision::kStop) {
      stopped_early = true;
      break;
    }
    if (options.interrupt_after_epoch != 0 && epoch == options.interrupt_after_epoch) return {kExitFailure, {}};
  }

  MultitaskModel best = initial_model(config);
  load_into(read_checkpoint(out / kBestCheckpoint), best.parameters());
  nlohmann::json reports = nlohmann::json::object();
  for (SplitName s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
    reports[std::string(split_name(s))] = to_json(evaluate(best, data.split(s), std::string(split_name(s))));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  nlohmann::json summary = {{"status", status},
                            {"trainer", std::string(trainer_name(config.trainer.kind))},
                            {"seed", config.trainer.seed},
                            {"epochs_run", last_epoch},
                            {"stopped_early", stopped_early || already_stopped},
                            {"steps", global_step},
                            {"best_epoch", stop.best_epoch},
                            {"best_val_objective", stop.best},
                            {"best_checkpoint", kBestCheckpoint},
                            {"reports", reports},
                            {"loss_ratio", balance_summary(balance)},
                            {"wall_seconds", seconds}};
  write_text_atomic(out / kSummaryFile, summary.dump(2) + "\n");
  fs::remove(out / kSentinel);
  return {kExitOk, summary};
}

EvalReport evaluate_checkpoint(const RunConfig& config, const fs::path& checkpoint, SplitName split) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  if (ckpt.metadata.contains("architecture") && ckpt.metadata["architecture"] != kArchitectureTag) {
    throw CheckpointMismatch("checkpoint architecture " + ckpt.metadata["architecture"].dump() + ", expected " +
                             kArchitectureTag);
  }
  MultitaskModel model = initial_model(config);
  load_into(ckpt, model.parameters());
  const OverlayDataset data = prepare_dataset(config);
  return evaluate(model, data.split(split), std::string(split_name(split)));
}

std::vector<QuadraticDemoRow> quadratic_demo(const QuadraticDemoConfig& config) {
  if (config.curvatures.size() < 2) throw ConfigError("curvatures: need at least two tasks");
  for (std::size_t i = 0; i < config.curvatures.size(); ++i) {
    const double c = config.curvatures[i];
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("curvatures: c_" + std::to_string(i + 1) + " must be > 0");
    if (config.alpha * c >= 1.0) {
      throw ConfigError("alpha: alpha * c_" + std::to_string(i + 1) + " = " + std::to_string(config.alpha * c) +
                        " must be < 1");
    }
  }
  if (!(config.alpha >= 0.0) || !(config.beta >= 0.0)) throw ConfigError("alpha, beta: must be >= 0");

  const QuadraticTaskSet tasks = QuadraticTaskSet::centered(config.curvatures, 1);
  const std::size_t T = tasks.task_count();
  std::vector<QuadraticDemoRow> rows;

  for (const bool single_step : {false, true}) {
    TrainerConfig tc;
    tc.kind = single_step ? TrainerKind::kProposed : TrainerKind::kSplitOnly;
    tc.alpha = config.alpha;
    tc.beta = config.beta;
    QuadraticObjective objective(tasks, {config.theta0});
    for (std::size_t step = 1; step <= config.steps; ++step) {
      const double theta = objective.theta()[0];
      std::vector<double> pre(T), post(T);
      for (std::size_t i = 0; i < T; ++i) {
        const double g = quadratic_loss_and_grad(tasks, objective.theta(), i).grad[0];
        const std::vector<double> inner{theta - config.alpha * g};
        pre[i] = std::abs(g);
        post[i] = std::abs(quadratic_loss_and_grad(tasks, inner, i).grad[0]);
      }
      const StepOutcome outcome = train_step(objective, tc);
      if (single_step) post = outcome.shared_grad_norms_post;
      const std::vector<double>& driving = single_step ? post : pre;
      const auto [lo, hi] = std::minmax_element(driving.begin(), driving.end());
      const double ratio = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::quiet_NaN();
      for (std::size_t i = 0; i < T; ++i) {
        const double factor = pre[i] > 0.0 ? post[i] / pre[i] : std::numeric_limits<double>::quiet_NaN();
        rows.push_back({single_step ? "single_step" : "direct", step, theta, i + 1, pre[i], post[i], factor, ratio});
      }
    }
  }
  return rows;
}

std::string quadratic_demo_csv(const std::vector<QuadraticDemoRow>& rows) {
  std::string out = std::string(kQuadraticCsvHeader) + "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%zu,%.17g,%.17g,%.17g,%.17g\n", r.regime.c_str(), r.step, r.theta,
                  r.task, r.grad_pre, r.grad_post, r.factor, r.ratio);
    out += buf;
  }
  return out;
}

}  // namespace mtl
