#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "mtl/checkpoint.hpp"
#include "mtl/error.hpp"
#include "mtl/experiment.hpp"
#include "mtl/glyphs.hpp"

namespace {

mtl::RunConfig load_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                   const std::string& out) {
  mtl::RunConfig config = mtl::load_run_config(path);
  if (seed) config.trainer.seed = *seed;
  if (!out.empty()) config.out_dir = out;
  mtl::validate_run_config(config);
  return config;
}

void log_stderr(const std::string& msg) { std::cerr << msg << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask training with a single-gradient-step shared update"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, split = "test";
  std::optional<std::uint64_t> seed;
  bool resume = false;

  auto* train = app.add_subcommand("train", "Train a model and write run artifacts");
  train->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Override the output directory");
  train->add_flag("--resume", resume, "Continue an interrupted run in the output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; prints a JSON report");
  eval->add_option("--config", config_path, "Run config describing the dataset")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "train, validation or test");

  mtl::QuadraticDemoConfig qd;
  std::string quad_out;
  auto* quad = app.add_subcommand("quadratic-demo", "Gradient magnitudes on scalar quadratic tasks (CSV)");
  quad->add_option("--curvatures", qd.curvatures, "Per-task curvatures")->delimiter(',');
  quad->add_option("--alpha", qd.alpha, "Inner step size");
  quad->add_option("--beta", qd.beta, "Shared step size");
  quad->add_option("--steps", qd.steps, "Number of steps");
  quad->add_option("--theta0", qd.theta0, "Initial shared parameter");
  quad->add_option("--out", quad_out, "Write CSV here instead of standard output");

  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "Materialize the overlay cache for a config");
  build->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  std::size_t glyph_count = 6000;
  std::uint64_t glyph_seed = 0;
  auto* glyphs = dataset->add_subcommand("glyphs", "Write a synthetic glyph set as IDX files");
  glyphs->add_option("--count", glyph_count, "Number of glyphs");
  glyphs->add_option("--seed", glyph_seed, "Generator seed");
  glyphs->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mtl::kExitOk : mtl::kExitConfig;
  }

  try {
    if (*train) {
      const auto config = load_with_overrides(config_path, seed, out_dir);
      const auto result = mtl::run_training(config, {resume, log_stderr});
      return result.exit_code;
    }
    if (*eval) {
      const auto config = load_with_overrides(config_path, std::nullopt, "");
      const auto report = mtl::evaluate_checkpoint(config, checkpoint, mtl::parse_split_name(split));
      std::cout << mtl::to_json(report).dump(2) << std::endl;
      return mtl::kExitOk;
    }
    if (*quad) {
      const std::string csv = mtl::quadratic_demo_csv(mtl::quadratic_demo(qd));
      if (quad_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(quad_out) << csv;
      }
      return mtl::kExitOk;
    }
    if (*build) {
      const auto config = load_with_overrides(config_path, std::nullopt, "");
      const auto data = mtl::prepare_dataset(config);
      std::cout << mtl::dataset_manifest(data).dump(2) << std::endl;
      return mtl::kExitOk;
    }
    if (*glyphs) {
      const auto set = mtl::make_glyph_set(glyph_count, glyph_seed);
      std::filesystem::create_directories(out_dir);
      mtl::write_idx(std::filesystem::path(out_dir) / "glyphs-images-idx3-ubyte", mtl::images_to_idx(set));
      mtl::write_idx(std::filesystem::path(out_dir) / "glyphs-labels-idx1-ubyte", mtl::labels_to_idx(set));
      return mtl::kExitOk;
    }
  } catch (const mtl::ConfigError& e) {
    std::cerr << "config error:\n" << e.what() << std::endl;
    return mtl::kExitConfig;
  } catch (const mtl::CheckpointMismatch& e) {
    std::cerr << "checkpoint mismatch: " << e.what() << std::endl;
    return mtl::kExitConfig;
  } catch (const mtl::FormatError& e) {
    std::cerr << "format error: " << e.what() << std::endl;
    return mtl::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return mtl::kExitFailure;
  }
  return mtl::kExitOk;
}
