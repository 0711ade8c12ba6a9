#include "mtl/overlay.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "mtl/digest.hpp"
#include "mtl/error.hpp"

namespace mtl {

Image compose_overlay(const Image& a, const Image& b, std::size_t canvas_rows, std::size_t canvas_cols) {
  if (a.rows > canvas_rows || a.cols > canvas_cols || b.rows > canvas_rows || b.cols > canvas_cols) {
    throw ShapeError("compose_overlay: canvas " + std::to_string(canvas_rows) + "x" + std::to_string(canvas_cols) +
                     " is smaller than a source image");
  }
  Image out{canvas_rows, canvas_cols, std::vector<float>(canvas_rows * canvas_cols, 0.0f)};
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) out.pixels[r * canvas_cols + c] = a.pixels[r * a.cols + c];
  }
  const std::size_t r0 = canvas_rows - b.rows, c0 = canvas_cols - b.cols;
  for (std::size_t r = 0; r < b.rows; ++r) {
    for (std::size_t c = 0; c < b.cols; ++c) {
      float& dst = out.pixels[(r0 + r) * canvas_cols + c0 + c];
      dst = std::max(dst, b.pixels[r * b.cols + c]);
    }
  }
  return out;
}

Image to_image(std::span<const std::uint8_t> pixels, std::size_t rows, std::size_t cols) {
  Image img{rows, cols, std::vector<float>(rows * cols)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(pixels[i] / 255.0);
  return img;
}

std::string_view split_name(SplitName split) {
  switch (split) {
    case SplitName::kTrain: return "train";
    case SplitName::kValidation: return "validation";
    case SplitName::kTest: return "test";
  }
  return "unknown";
}

SplitName parse_split_name(std::string_view name) {
  if (name == "train") return SplitName::kTrain;
  if (name == "validation" || name == "val") return SplitName::kValidation;
  if (name == "test") return SplitName::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, validation, test)");
}

std::uint64_t image_digest(std::span<const float> pixels) {
  Fnv1a h;
  h.update_values(pixels);
  return h.value();
}

OverlayDataset build_overlay_dataset(const LabeledImages& source_a, const LabeledImages& source_b,
                                     const SplitSizes& sizes, std::uint64_t seed) {
  if (source_a.count() == 0 || source_b.count() == 0) throw Error("build_overlay_dataset: empty source");
  const bool same = source_a.digest() == source_b.digest();
  const std::uint64_t na = source_a.count(), nb = source_b.count();
  const std::uint64_t pairs = same ? na * (na - 1) : na * nb;
  if (sizes.total() == 0) throw ConfigError("build_overlay_dataset: requested zero samples");
  if (sizes.total() > pairs) {
    throw ConfigError("build_overlay_dataset: " + std::to_string(sizes.total()) + " samples requested but only " +
                      std::to_string(pairs) + " distinct source pairs exist");
  }

  OverlayDataset ds;
  ds.source_a = source_a.name;
  ds.source_b = source_b.name;
  ds.source_a_digest = source_a.digest();
  ds.source_b_digest = source_b.digest();
  ds.seed = seed;
  ds.same_source = same;

  Rng rng(derive_seed(seed, 0x6F7665726C6179));
  std::unordered_set<std::uint64_t> used_pairs;
  std::unordered_set<std::uint64_t> used_images;
  const std::array<std::size_t, 3> counts{sizes.train, sizes.validation, sizes.test};
  const std::size_t max_attempts = 64 * sizes.total() + 1024;
  std::size_t attempts = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    auto& split = ds.splits[s];
    split.canvas = kOverlayCanvas;
    split.images.reserve(counts[s] * kOverlayCanvas * kOverlayCanvas);
    while (split.size() < counts[s]) {
      if (++attempts > max_attempts) {
        throw Error("build_overlay_dataset: could not find enough distinct samples; sources contain duplicates");
      }
      const std::uint64_t ia = rng.below(na);
      const std::uint64_t ib = rng.below(nb);
      if (same && ia == ib) continue;
      if (!used_pairs.insert(ia * nb + ib).second) continue;
      const Image img = compose_overlay(to_image(source_a.image(ia), source_a.rows, source_a.cols),
                                        to_image(source_b.image(ib), source_b.rows, source_b.cols));
      const std::uint64_t d = image_digest(img.pixels);
      if (!used_images.insert(d).second) continue;
      split.images.insert(split.images.end(), img.pixels.begin(), img.pixels.end());
      split.labels[0].push_back(source_a.labels[ia]);
      split.labels[1].push_back(source_b.labels[ib]);
      split.digests.push_back(d);
    }
  }
  return ds;
}

std::uint64_t batch_digest(const Tensor& x, const std::vector<std::vector<std::int64_t>>& labels) {
  Fnv1a h;
  h.update_values(x.data());
  for (const auto& l : labels) h.update_values(std::span<const std::int64_t>(l));
  return h.value();
}

MultiTaskBatch make_batch(const DatasetSplit& split, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error("make_batch: empty index list");
  const std::size_t px = split.canvas * split.canvas;
  std::vector<double> x(indices.size() * px);
  MultiTaskBatch batch;
  batch.labels.assign(2, {});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t i = indices[b];
    if (i >= split.size()) throw Error("make_batch: index " + std::to_string(i) + " out of range");
    auto img = split.image(i);
    std::copy(img.begin(), img.end(), x.begin() + static_cast<std::ptrdiff_t>(b * px));
    for (std::size_t t = 0; t < 2; ++t) batch.labels[t].push_back(split.labels[t][i]);
  }
  batch.x = Tensor::from({indices.size(), 1, split.canvas, split.canvas}, std::move(x));
  batch.digest = batch_digest(batch.x, batch.labels);
  return batch;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

nlohmann::json overlay_manifest(const std::string& source_a, std::uint64_t source_a_digest, const std::string& source_b,
                                std::uint64_t source_b_digest, const SplitSizes& sizes, std::uint64_t seed) {
  return {{"format", "mtl-overlay-cache"},
          {"version", 1},
          {"canvas", kOverlayCanvas},
          {"seed", seed},
          {"sizes", {{"train", sizes.train}, {"validation", sizes.validation}, {"test", sizes.test}}},
          {"source_a", {{"name", source_a}, {"digest", hex_digest(source_a_digest)}}},
          {"source_b", {{"name", source_b}, {"digest", hex_digest(source_b_digest)}}}};
}

nlohmann::json overlay_manifest(const LabeledImages& source_a, const LabeledImages& source_b, const SplitSizes& sizes,
                                std::uint64_t seed) {
  return overlay_manifest(source_a.name, source_a.digest(), source_b.name, source_b.digest(), sizes, seed);
}

nlohmann::json dataset_manifest(const OverlayDataset& dataset) {
  return overlay_manifest(dataset.source_a, dataset.source_a_digest, dataset.source_b, dataset.source_b_digest,
                          dataset.sizes(), dataset.seed);
}

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) {
    const auto path = (dir / ".lock").string();
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path);
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error("cannot lock " + path);
    }
  }
  ~DirectoryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

void write_dataset_cache(const std::filesystem::path& dir, const OverlayDataset& dataset) {
  std::filesystem::create_directories(dir);
  std::string images;
  std::array<std::string, 2> labels;
  for (const auto& split : dataset.splits) {
    for (float v : split.images) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) images.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
    for (std::size_t t = 0; t < 2; ++t) labels[t].append(split.labels[t].begin(), split.labels[t].end());
  }
  write_bytes(dir / "images.f32", images);
  write_bytes(dir / "labels_task1.u8", labels[0]);
  write_bytes(dir / "labels_task2.u8", labels[1]);
  // Manifest last: its presence marks a complete cache.
  write_bytes(dir / "manifest.json", dataset_manifest(dataset).dump(2) + "\n");
}

OverlayDataset read_dataset_cache(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_bytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dataset cache: malformed manifest: " + std::string(e.what()));
  }
  OverlayDataset ds;
  SplitSizes sizes;
  try {
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    sizes = {manifest.at("sizes").at("train").get<std::size_t>(),
             manifest.at("sizes").at("validation").get<std::size_t>(),
             manifest.at("sizes").at("test").get<std::size_t>()};
    ds.source_a = manifest.at("source_a").at("name").get<std::string>();
    ds.source_b = manifest.at("source_b").at("name").get<std::string>();
    ds.source_a_digest = std::stoull(manifest.at("source_a").at("digest").get<std::string>(), nullptr, 16);
    ds.source_b_digest = std::stoull(manifest.at("source_b").at("digest").get<std::string>(), nullptr, 16);
    ds.same_source = ds.source_a_digest == ds.source_b_digest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dataset cache: manifest missing fields: " + std::string(e.what()));
  }
  const std::size_t px = kOverlayCanvas * kOverlayCanvas;
  const std::string images = read_bytes(dir / "images.f32");
  const std::array<std::string, 2> labels{read_bytes(dir / "labels_task1.u8"), read_bytes(dir / "labels_task2.u8")};
  if (images.size() != sizes.total() * px * 4 || labels[0].size() != sizes.total() || labels[1].size() != sizes.total()) {
    throw FormatError("dataset cache: blob sizes do not match the manifest");
  }
  const std::array<std::size_t, 3> counts{sizes.train, sizes.validation, sizes.test};
  std::size_t offset = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    auto& split = ds.splits[s];
    split.images.resize(counts[s] * px);
    for (std::size_t i = 0; i < split.images.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) {
        bits = (bits << 8) | static_cast<unsigned char>(images[4 * (offset * px + i) + static_cast<std::size_t>(b)]);
      }
      split.images[i] = std::bit_cast<float>(bits);
    }
    for (std::size_t t = 0; t < 2; ++t) {
      split.labels[t].assign(labels[t].begin() + static_cast<std::ptrdiff_t>(offset),
                             labels[t].begin() + static_cast<std::ptrdiff_t>(offset + counts[s]));
    }
    for (std::size_t i = 0; i < counts[s]; ++i) split.digests.push_back(image_digest(split.image(i)));
    offset += counts[s];
  }
  return ds;
}

OverlayDataset load_or_build_cache(const std::filesystem::path& dir, const nlohmann::json& expected_manifest,
                                   const std::function<OverlayDataset()>& build) {
  std::filesystem::create_directories(dir);
  DirectoryLock lock(dir);
  if (std::filesystem::exists(dir / "manifest.json")) {
    try {
      if (nlohmann::json::parse(read_bytes(dir / "manifest.json")) == expected_manifest) return read_dataset_cache(dir);
    } catch (const std::exception&) {
      // Unreadable cache is rebuilt below.
    }
    std::filesystem::remove(dir / "manifest.json");
  }
  OverlayDataset ds = build();
  if (dataset_manifest(ds) != expected_manifest) throw Error("dataset cache: built dataset does not match the manifest");
  write_dataset_cache(dir, ds);
  return ds;
}

}  // namespace mtl
