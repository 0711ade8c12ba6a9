#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtl/checkpoint.hpp"
#include "mtl/error.hpp"
#include "mtl/experiment.hpp"

using namespace mtl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtl_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig tiny_config(const fs::path& root, const std::string& run) {
  RunConfig c = parse_run_config(
      "trainer = proposed\n"
      "alpha = 0.05\n"
      "beta = 0.05\n"
      "batch_size = 32\n"
      "synthetic_pool = 400\n"
      "train_size = 160\n"
      "val_size = 40\n"
      "test_size = 40\n"
      "epochs = 3\n"
      "patience = 5\n"
      "seed = 7\n");
  c.out_dir = (root / run).string();
  c.cache_dir = (root / "cache").string();
  return c;
}

std::string diag(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(RunConfigText, ParsesTypedFields) {
  const auto c = parse_run_config(
      "# comment line\n"
      "trainer = fixed-weight   # trailing comment\n"
      "head_step_size = 0.01\n"
      "loss_weights = 0.25, 2\n"
      "batch_size = 64\n"
      "train_size = 100\n"
      "dataset = idx\n"
      "source_a_images = a1.idx, a2.idx\n"
      "source_a_labels = l1.idx,l2.idx\n");
  EXPECT_EQ(c.trainer.kind, TrainerKind::kFixedWeight);
  EXPECT_EQ(c.trainer.loss_weights, (std::vector<double>{0.25, 2.0}));
  EXPECT_EQ(c.trainer.batch_size, 64u);
  EXPECT_EQ(c.sizes.train, 100u);
  EXPECT_EQ(c.dataset, DatasetKind::kIdx);
  EXPECT_EQ(c.source_a_images, (std::vector<std::string>{"a1.idx", "a2.idx"}));
}

TEST(RunConfigText, DefaultsMatchProtocolConstants) {
  const auto c = parse_run_config("");
  EXPECT_EQ(c.trainer.kind, TrainerKind::kProposed);
  EXPECT_EQ(c.trainer.alpha, 0.001);
  EXPECT_EQ(c.trainer.beta, 0.001);
  EXPECT_EQ(c.trainer.batch_size, 256u);
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_EQ(c.patience, 10u);
}

TEST(RunConfigText, EchoReparsesEqual) {
  RunConfig c = parse_run_config("trainer = split-only\nalpha = 0.1\nbeta = 0.30000000000000004\nseed = 12\n");
  c.out_dir = "some dir/with space";
  EXPECT_EQ(parse_run_config(serialize_run_config(c)), c);
  const auto fw = parse_run_config("trainer = fixed-weight\nloss_weights = 0.1,0.7\nhead_step_size = 1e-3\n");
  EXPECT_EQ(parse_run_config(serialize_run_config(fw)), fw);
}

TEST(RunConfigText, DiagnosticsListEveryBadField) {
  const auto msg = diag("alpha = fast\nbatch_size = -3\ncolour = blue\nepochs = 2\nepochs = 3\n");
  EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
  EXPECT_NE(msg.find("batch_size"), std::string::npos) << msg;
  EXPECT_NE(msg.find("colour: unknown key"), std::string::npos) << msg;
  EXPECT_NE(msg.find("epochs: repeated"), std::string::npos) << msg;
}

TEST(RunConfigText, SemanticChecks) {
  EXPECT_NE(diag("alpha = 0\n").find("alpha"), std::string::npos);
  EXPECT_NE(diag("trainer = fixed-weight\nloss_weights = 1\n").find("loss_weights"), std::string::npos);
  EXPECT_NE(diag("train_size = 0\n").find("train_size"), std::string::npos);
  EXPECT_NE(diag("dataset = idx\n").find("source_a_images"), std::string::npos);
  EXPECT_NE(diag("trainer = maml\n").find("maml"), std::string::npos);
  EXPECT_NE(diag("just words\n").find("line 1"), std::string::npos);
}

TEST(Training, ArtifactsDeterminismAndEval) {
  const auto root = temp_dir("train");
  const RunConfig a = tiny_config(root, "a");
  const auto ra = run_training(a);
  ASSERT_EQ(ra.exit_code, kExitOk);
  for (const char* f : {kConfigEcho, kMetricsFile, kSummaryFile, kBestCheckpoint}) {
    EXPECT_TRUE(fs::exists(fs::path(a.out_dir) / f)) << f;
  }
  EXPECT_FALSE(fs::exists(fs::path(a.out_dir) / kSentinel));
  EXPECT_EQ(parse_run_config(slurp(fs::path(a.out_dir) / kConfigEcho)), a);

  const auto summary = nlohmann::json::parse(slurp(fs::path(a.out_dir) / kSummaryFile));
  EXPECT_EQ(summary["status"], "completed");
  EXPECT_EQ(summary["epochs_run"], 3);
  EXPECT_EQ(summary["steps"], 15);  // 160 / 32 per epoch
  const std::string csv = slurp(fs::path(a.out_dir) / kMetricsFile);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 15 * 2);
  EXPECT_EQ(csv.find("nan"), std::string::npos);
  EXPECT_EQ(csv.find("inf"), std::string::npos);

  // Same config and seed, other directory: identical metrics bytes.
  RunConfig b = a;
  b.out_dir = (root / "b").string();
  ASSERT_EQ(run_training(b).exit_code, kExitOk);
  EXPECT_EQ(slurp(fs::path(b.out_dir) / kMetricsFile), csv);

  // The best checkpoint re-evaluates to the recorded reports and objective.
  for (SplitName s : {SplitName::kValidation, SplitName::kTest}) {
    const auto report = evaluate_checkpoint(a, fs::path(a.out_dir) / kBestCheckpoint, s);
    EXPECT_EQ(to_json(report), summary["reports"][std::string(split_name(s))]);
  }
  const auto val = evaluate_checkpoint(a, fs::path(a.out_dir) / kBestCheckpoint, SplitName::kValidation);
  EXPECT_NEAR(validation_objective(val), summary["best_val_objective"].get<double>(), 1e-9);
  EXPECT_NE(summary["reports"]["validation"], summary["reports"]["test"]);
  fs::remove_all(root);
}

TEST(Training, OrdinaryAndProposedShareOneCache) {
  const auto root = temp_dir("share");
  RunConfig p = tiny_config(root, "p");
  p.epochs = 1;
  RunConfig o = p;
  o.trainer.kind = TrainerKind::kOrdinary;
  o.trainer.head_step_size = 0.05;
  o.out_dir = (root / "o").string();
  ASSERT_EQ(run_training(p).exit_code, kExitOk);
  ASSERT_EQ(run_training(o).exit_code, kExitOk);
  std::size_t caches = 0;
  for (const auto& e : fs::directory_iterator(root / "cache")) caches += e.is_directory();
  EXPECT_EQ(caches, 1u);
  const std::string csv = slurp(fs::path(o.out_dir) / kMetricsFile);
  EXPECT_NE(csv.find("\n1,1,1,"), std::string::npos);
  fs::remove_all(root);
}

TEST(Training, ResumeContinuesByteIdentically) {
  const auto root = temp_dir("resume");
  const RunConfig full = tiny_config(root, "full");
  ASSERT_EQ(run_training(full).exit_code, kExitOk);

  RunConfig part = full;
  part.out_dir = (root / "part").string();
  RunOptions interrupt;
  interrupt.interrupt_after_epoch = 1;
  run_training(part, interrupt);
  EXPECT_TRUE(fs::exists(fs::path(part.out_dir) / kSentinel));
  EXPECT_FALSE(fs::exists(fs::path(part.out_dir) / kSummaryFile));
  // A torn row from the interrupted epoch is dropped on resume.
  std::ofstream(fs::path(part.out_dir) / kMetricsFile, std::ios::app) << "99,2,1,0.5";

  RunConfig changed = part;
  changed.trainer.beta = 0.06;
  RunOptions resume;
  resume.resume = true;
  EXPECT_THROW(run_training(changed, resume), ConfigError);

  ASSERT_EQ(run_training(part, resume).exit_code, kExitOk);
  EXPECT_FALSE(fs::exists(fs::path(part.out_dir) / kSentinel));
  EXPECT_EQ(slurp(fs::path(part.out_dir) / kMetricsFile), slurp(fs::path(full.out_dir) / kMetricsFile));
  EXPECT_EQ(slurp(fs::path(part.out_dir) / kBestCheckpoint), slurp(fs::path(full.out_dir) / kBestCheckpoint));
  fs::remove_all(root);
}

TEST(Training, DivergenceExitsThreeAndKeepsCheckpoint) {
  const auto root = temp_dir("diverge");
  RunConfig c = tiny_config(root, "d");
  c.trainer.alpha = 1e200;
  c.trainer.beta = 1e200;
  const auto r = run_training(c);
  EXPECT_EQ(r.exit_code, kExitDiverged);
  EXPECT_EQ(r.summary["status"], "diverged");
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / kBestCheckpoint));
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / kSentinel));
  EXPECT_NO_THROW(read_checkpoint(fs::path(c.out_dir) / kBestCheckpoint));
  fs::remove_all(root);
}

TEST(Training, EvalRejectsCorruptAndForeignCheckpoints) {
  const auto root = temp_dir("badckpt");
  const RunConfig c = tiny_config(root, "x");
  std::ofstream(root / "junk.ckpt") << "definitely not a checkpoint";
  EXPECT_THROW(evaluate_checkpoint(c, root / "junk.ckpt", SplitName::kTest), FormatError);
  const auto three = MultitaskModel::reference(3, 1);
  write_checkpoint(root / "three.ckpt", three.parameters());
  try {
    evaluate_checkpoint(c, root / "three.ckpt", SplitName::kTest);
    FAIL();
  } catch (const CheckpointMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("head2.0.weight"), std::string::npos) << e.what();
  }
  fs::remove_all(root);
}

TEST(QuadraticDemo, FactorsForFourAndOne) {
  QuadraticDemoConfig c;
  c.curvatures = {4.0, 1.0};
  c.alpha = 0.1;
  c.steps = 3;
  const auto rows = quadratic_demo(c);
  ASSERT_EQ(rows.size(), 2u * 3u * 2u);
  for (const auto& r : rows) {
    if (r.step != 1) continue;
    EXPECT_NEAR(r.factor, r.task == 1 ? 0.6 : 0.9, 1e-15);
    EXPECT_NEAR(r.ratio, r.regime == "direct" ? 4.0 : 8.0 / 3.0, 1e-14);
  }
  const std::string csv = quadratic_demo_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kQuadraticCsvHeader);
}

TEST(QuadraticDemo, EqualCurvaturesGiveUnitRatios) {
  QuadraticDemoConfig c;
  c.curvatures = {1.0, 1.0};
  for (const auto& r : quadratic_demo(c)) EXPECT_EQ(r.ratio, 1.0);
}

TEST(QuadraticDemo, SingleStepCloserToOneEveryStep) {
  QuadraticDemoConfig c;
  c.curvatures = {5.0, 0.5, 2.0};
  c.alpha = 0.15;
  c.beta = 0.05;
  c.steps = 30;
  std::map<std::size_t, double> direct, single;
  for (const auto& r : quadratic_demo(c)) (r.regime == "direct" ? direct : single)[r.step] = r.ratio;
  // Recurrence oracle: with optima at 0 every gradient is c_i * theta, so the
  // direct ratio is max c / min c and the single-step one max/min of c_i (1 - alpha c_i).
  const double direct_oracle = 5.0 / 0.5;
  double hi = 0, lo = 1e9;
  for (double ci : c.curvatures) {
    hi = std::max(hi, ci * (1 - c.alpha * ci));
    lo = std::min(lo, ci * (1 - c.alpha * ci));
  }
  for (std::size_t s = 1; s <= 30; ++s) {
    EXPECT_NEAR(direct[s], direct_oracle, 1e-12);
    EXPECT_NEAR(single[s], hi / lo, 1e-12);
    EXPECT_LT(std::abs(single[s] - 1.0), std::abs(direct[s] - 1.0));
  }
}

TEST(QuadraticDemo, RejectsInvertingStep) {
  QuadraticDemoConfig c;
  c.curvatures = {10.0, 1.0};
  c.alpha = 0.1;
  EXPECT_THROW(quadratic_demo(c), ConfigError);
  c.curvatures = {1.0, -1.0};
  c.alpha = 0.01;
  EXPECT_THROW(quadratic_demo(c), ConfigError);
}
