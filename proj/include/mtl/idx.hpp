#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mtl {

/// IDX file restricted to unsigned-byte payloads (element type 0x08).
struct IdxFile {
  std::uint8_t element_type = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  bool operator==(const IdxFile&) const = default;
};

/// Big-endian magic 00 00 <type> <ndims>, then ndims big-endian u32 sizes, then the payload.
/// Errors carry the byte offset of the problem.
IdxFile parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxFile& file);

IdxFile read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxFile& file);

/// Grayscale images with one class label each; pixels are row-major bytes.
struct LabeledImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
  std::string name;

  std::size_t count() const { return labels.size(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span(pixels).subspan(i * rows * cols, rows * cols);
  }
  /// Appends another set with the same geometry.
  void append(const LabeledImages& other);
  std::uint64_t digest() const;
};

/// Pairs a 3-d image file with a 1-d label file of equal count.
LabeledImages labeled_images_from_idx(const IdxFile& images, const IdxFile& labels, std::string name = {});
IdxFile images_to_idx(const LabeledImages& set);
IdxFile labels_to_idx(const LabeledImages& set);

/// Pixel bytes scaled to [0, 1].
std::vector<double> scale_to_unit(std::span<const std::uint8_t> pixels);

}  // namespace mtl
