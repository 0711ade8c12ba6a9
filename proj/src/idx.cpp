#include "mtl/idx.hpp"

#include <fstream>
#include <iterator>

#include "mtl/digest.hpp"
#include "mtl/error.hpp"

namespace mtl {

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw FormatError("idx: truncated magic at byte " + std::to_string(bytes.size()) + ", need 4 bytes");
  }
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("idx: bad magic at byte 0, expected 00 00");
  IdxFile file;
  file.element_type = bytes[2];
  if (file.element_type != 0x08) {
    throw FormatError("idx: unsupported element type 0x" + hex_digest(file.element_type).substr(14) +
                      " at byte 2, only 0x08 (ubyte) is supported");
  }
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw FormatError("idx: zero dimensions at byte 3");
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw FormatError("idx: truncated dimension table at byte " + std::to_string(bytes.size()) + ", expected " +
                      std::to_string(header) + " header bytes");
  }
  std::size_t expected = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const auto* p = bytes.data() + 4 + 4 * d;
    const std::uint32_t size = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                               (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    file.dims.push_back(size);
    expected *= size;
  }
  const std::size_t actual = bytes.size() - header;
  if (actual < expected) {
    throw FormatError("idx: truncated payload at byte " + std::to_string(bytes.size()) + ": expected " +
                      std::to_string(expected) + " payload bytes, got " + std::to_string(actual));
  }
  if (actual > expected) {
    throw FormatError("idx: " + std::to_string(actual - expected) + " trailing bytes after payload at byte " +
                      std::to_string(header + expected));
  }
  file.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return file;
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& file) {
  if (file.dims.empty() || file.dims.size() > 255) throw FormatError("idx: dimension count must be in [1, 255]");
  std::size_t expected = 1;
  for (auto d : file.dims) expected *= d;
  if (expected != file.payload.size()) {
    throw FormatError("idx: payload has " + std::to_string(file.payload.size()) + " bytes, dims need " +
                      std::to_string(expected));
  }
  std::vector<std::uint8_t> out{0, 0, file.element_type, static_cast<std::uint8_t>(file.dims.size())};
  for (auto d : file.dims) {
    out.push_back(static_cast<std::uint8_t>(d >> 24));
    out.push_back(static_cast<std::uint8_t>(d >> 16));
    out.push_back(static_cast<std::uint8_t>(d >> 8));
    out.push_back(static_cast<std::uint8_t>(d));
  }
  out.insert(out.end(), file.payload.begin(), file.payload.end());
  return out;
}

IdxFile read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("idx: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_idx(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_idx(const std::filesystem::path& path, const IdxFile& file) {
  const auto bytes = serialize_idx(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void LabeledImages::append(const LabeledImages& other) {
  if (count() == 0 && rows == 0) {
    rows = other.rows;
    cols = other.cols;
  }
  if (other.rows != rows || other.cols != cols) throw ShapeError("cannot append images of a different size");
  pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  name = name.empty() ? other.name : name + "+" + other.name;
}

std::uint64_t LabeledImages::digest() const {
  Fnv1a h;
  const std::uint64_t geometry[2] = {rows, cols};
  h.update_values(std::span<const std::uint64_t>(geometry));
  h.update_values(std::span<const std::uint8_t>(pixels));
  h.update_values(std::span<const std::uint8_t>(labels));
  return h.value();
}

LabeledImages labeled_images_from_idx(const IdxFile& images, const IdxFile& labels, std::string name) {
  if (images.dims.size() != 3) throw FormatError("idx: image file must have 3 dimensions (count, rows, cols)");
  if (labels.dims.size() != 1) throw FormatError("idx: label file must have 1 dimension");
  if (images.dims[0] != labels.dims[0]) {
    throw FormatError("idx: " + std::to_string(images.dims[0]) + " images but " + std::to_string(labels.dims[0]) +
                      " labels");
  }
  LabeledImages set;
  set.rows = images.dims[1];
  set.cols = images.dims[2];
  set.pixels = images.payload;
  set.labels = labels.payload;
  set.name = std::move(name);
  return set;
}

IdxFile images_to_idx(const LabeledImages& set) {
  return {0x08,
          {static_cast<std::uint32_t>(set.count()), static_cast<std::uint32_t>(set.rows),
           static_cast<std::uint32_t>(set.cols)},
          set.pixels};
}

IdxFile labels_to_idx(const LabeledImages& set) {
  return {0x08, {static_cast<std::uint32_t>(set.count())}, set.labels};
}

std::vector<double> scale_to_unit(std::span<const std::uint8_t> pixels) {
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i] / 255.0;
  return out;
}

}  // namespace mtl
