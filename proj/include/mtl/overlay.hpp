#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mtl/idx.hpp"
#include "mtl/random.hpp"
#include "mtl/tensor.hpp"

namespace mtl {

/// Row-major image with pixel values in [0, 1].
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> pixels;
};

inline constexpr std::size_t kOverlayCanvas = 36;

/// `a` anchored top-left, `b` anchored bottom-right, overlapping pixels take the max.
Image compose_overlay(const Image& a, const Image& b, std::size_t canvas_rows = kOverlayCanvas,
                      std::size_t canvas_cols = kOverlayCanvas);

Image to_image(std::span<const std::uint8_t> pixels, std::size_t rows, std::size_t cols);

enum class SplitName { kTrain = 0, kValidation = 1, kTest = 2 };
std::string_view split_name(SplitName split);
SplitName parse_split_name(std::string_view name);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + validation + test; }
  bool operator==(const SplitSizes&) const = default;
};

/// One split of composed samples; labels[task][i] is the class of sample i for that task.
struct DatasetSplit {
  std::size_t canvas = kOverlayCanvas;
  std::vector<float> images;
  std::array<std::vector<std::uint8_t>, 2> labels;
  std::vector<std::uint64_t> digests;

  std::size_t size() const { return digests.size(); }
  std::span<const float> image(std::size_t i) const {
    return std::span(images).subspan(i * canvas * canvas, canvas * canvas);
  }
};

struct OverlayDataset {
  std::array<DatasetSplit, 3> splits;
  std::string source_a;
  std::string source_b;
  std::uint64_t source_a_digest = 0;
  std::uint64_t source_b_digest = 0;
  std::uint64_t seed = 0;
  bool same_source = true;

  const DatasetSplit& split(SplitName s) const { return splits[static_cast<std::size_t>(s)]; }
  SplitSizes sizes() const { return {splits[0].size(), splits[1].size(), splits[2].size()}; }
};

/// Composes sizes.total() samples by drawing (a, b) source pairs uniformly with
/// replacement. A pair (or a composed image) never repeats, so splits are
/// disjoint. In same-source mode pass the same set twice; the two picks differ.
/// Task 1 takes the label of the top-left image, task 2 the bottom-right one.
OverlayDataset build_overlay_dataset(const LabeledImages& source_a, const LabeledImages& source_b,
                                     const SplitSizes& sizes, std::uint64_t seed);

std::uint64_t image_digest(std::span<const float> pixels);

/// One mini-batch: images plus one label vector per task.
struct MultiTaskBatch {
  Tensor x;  // [B, 1, H, W]
  std::vector<std::vector<std::int64_t>> labels;
  std::uint64_t digest = 0;

  std::size_t size() const { return x.defined() ? x.dim(0) : 0; }
  std::size_t task_count() const { return labels.size(); }
};

std::uint64_t batch_digest(const Tensor& x, const std::vector<std::vector<std::int64_t>>& labels);
MultiTaskBatch make_batch(const DatasetSplit& split, std::span<const std::size_t> indices);

/// Fixed-size index batches over a shuffled permutation; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng);

// Cache directory: manifest.json, images.f32 (little-endian, train|validation|test),
// labels_task1.u8, labels_task2.u8, digests are recomputed on load.
nlohmann::json dataset_manifest(const OverlayDataset& dataset);
/// The manifest build_overlay_dataset(a, b, sizes, seed) would produce, without composing anything.
nlohmann::json overlay_manifest(const LabeledImages& source_a, const LabeledImages& source_b, const SplitSizes& sizes,
                                std::uint64_t seed);
nlohmann::json overlay_manifest(const std::string& source_a, std::uint64_t source_a_digest, const std::string& source_b,
                                std::uint64_t source_b_digest, const SplitSizes& sizes, std::uint64_t seed);
void write_dataset_cache(const std::filesystem::path& dir, const OverlayDataset& dataset);
OverlayDataset read_dataset_cache(const std::filesystem::path& dir);

/// Returns the cached dataset when its manifest equals `expected_manifest`;
/// otherwise runs `build`, stores the result, and returns it. Holds an
/// advisory lock on the directory for the duration.
OverlayDataset load_or_build_cache(const std::filesystem::path& dir, const nlohmann::json& expected_manifest,
                                   const std::function<OverlayDataset()>& build);

}  // namespace mtl
