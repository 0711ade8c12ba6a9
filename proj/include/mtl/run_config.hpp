#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtl/overlay.hpp"
#include "mtl/trainers.hpp"

namespace mtl {

enum class DatasetKind { kSynthetic, kIdx };

/// Everything a training run needs. Parsed from flat `key = value` text;
/// '#' starts a comment. Unknown or repeated keys are rejected.
struct RunConfig {
  TrainerConfig trainer;
  DatasetKind dataset = DatasetKind::kSynthetic;
  std::size_t synthetic_pool = 6000;  // glyphs drawn for the synthetic source
  std::vector<std::string> source_a_images;
  std::vector<std::string> source_a_labels;
  std::vector<std::string> source_b_images;
  std::vector<std::string> source_b_labels;
  SplitSizes sizes{2000, 200, 200};
  std::uint64_t dataset_seed = 0;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::string out_dir = "runs/default";
  std::string cache_dir;  // $MTL_CACHE_DIR wins; both empty: ./mtl-cache

  bool operator==(const RunConfig& other) const;
};

/// Parses config text; throws ConfigError listing every bad field, one per line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical text form; parse_run_config(serialize_run_config(c)) == c.
std::string serialize_run_config(const RunConfig& config);
/// Field-level checks beyond syntax (positive sizes, trainer invariants, source lists).
void validate_run_config(const RunConfig& config);

std::filesystem::path resolve_cache_root(const RunConfig& config);

}  // namespace mtl
