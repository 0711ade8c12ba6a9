#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "../support/op_cases.hpp"
#include "mtl/checkpoint.hpp"
#include "mtl/idx.hpp"
#include "mtl/model.hpp"

using namespace mtl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtl_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string what_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Checkpoint, BitExactRoundTrip) {
  const auto model = MultitaskModel::reference(2, 5);
  auto params = model.parameters();
  // Awkward values survive: negative zero, subnormal, extremes.
  auto w = params[0].tensor.mutable_data();
  w[0] = -0.0;
  w[1] = 4.9e-324;
  w[2] = 1.7976931348623157e308;
  w[3] = 0.1;
  const std::string bytes = encode_checkpoint(params, {{"epoch", 3}});
  const Checkpoint ckpt = decode_checkpoint(bytes);
  ASSERT_EQ(ckpt.tensors.size(), params.size());
  EXPECT_EQ(ckpt.metadata["epoch"], 3);
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(ckpt.tensors[i].name, params[i].name);
    EXPECT_EQ(ckpt.tensors[i].shape, params[i].tensor.shape());
    EXPECT_EQ(std::memcmp(ckpt.tensors[i].values.data(), params[i].tensor.data().data(),
                          params[i].tensor.size() * sizeof(double)),
              0);
  }
  auto other = MultitaskModel::reference(2, 6);
  load_into(ckpt, other.parameters());
  EXPECT_EQ(encode_checkpoint(other.parameters(), {{"epoch", 3}}), bytes);
}

TEST(Checkpoint, FileRoundTripLeavesNoTemp) {
  const auto dir = temp_dir("ckpt");
  const auto model = MultitaskModel::reference(2, 1);
  write_checkpoint(dir / "a.ckpt", model.parameters());
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));
  EXPECT_EQ(encode_checkpoint(model.parameters()), encode_checkpoint(model.parameters()));
  const auto back = read_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.tensors.size(), model.parameters().size());
  fs::remove_all(dir);
}

TEST(Checkpoint, LayoutIsMagicLengthJsonPayload) {
  ParameterList ps{{"w", Tensor::from({2}, {1.0, -2.0})}};
  const std::string bytes = encode_checkpoint(ps);
  EXPECT_EQ(bytes.substr(0, 8), "MTLCKPT1");
  std::uint64_t h = 0;
  for (int i = 7; i >= 0; --i) h = (h << 8) | static_cast<unsigned char>(bytes[8 + i]);
  const auto header = nlohmann::json::parse(bytes.substr(16, h));
  EXPECT_EQ(header["tensors"][0]["name"], "w");
  EXPECT_EQ(header["tensors"][0]["offset"], 0);
  EXPECT_EQ(header["payload_bytes"], 16);
  ASSERT_EQ(bytes.size(), 16 + h + 16);
  double first;
  std::memcpy(&first, bytes.data() + 16 + h, 8);  // host is little-endian here
  EXPECT_EQ(first, 1.0);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  const auto model = MultitaskModel::reference(2, 1);
  const std::string good = encode_checkpoint(model.parameters());
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_NE(what_of([&] { decode_checkpoint(bad_magic); }).find("byte 0"), std::string::npos);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 8)), FormatError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, 10)), FormatError);
  std::string flipped = good;
  flipped[flipped.size() - 3] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped), FormatError);
  std::string header_garbage = good;
  header_garbage[17] = '}';
  EXPECT_THROW(decode_checkpoint(header_garbage), FormatError);
}

TEST(Checkpoint, MismatchNamesFirstTensor) {
  const auto two = MultitaskModel::reference(2, 1);
  const auto three = MultitaskModel::reference(3, 1);
  const auto ckpt3 = decode_checkpoint(encode_checkpoint(three.parameters()));
  EXPECT_NE(what_of([&] { load_into(ckpt3, two.parameters()); }).find("head2.0.weight"), std::string::npos);
  const auto model5 = MultitaskModel::reference(2, 1, 5);
  const auto ckpt5 = decode_checkpoint(encode_checkpoint(model5.parameters()));
  const auto msg = what_of([&] { load_into(ckpt5, two.parameters()); });
  EXPECT_NE(msg.find("head0.2.weight"), std::string::npos) << msg;
  EXPECT_THROW(load_into(ckpt5, two.parameters()), CheckpointMismatch);
}

TEST(Idx, ParsesMinimalVector) {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 255};
  const IdxFile f = parse_idx(bytes);
  EXPECT_EQ(f.element_type, 0x08);
  EXPECT_EQ(f.dims, (std::vector<std::uint32_t>{3}));
  EXPECT_EQ(f.payload, (std::vector<std::uint8_t>{7, 0, 255}));
  EXPECT_EQ(scale_to_unit(f.payload), (std::vector<double>{7.0 / 255.0, 0.0, 1.0}));
}

TEST(Idx, TruncatedPayloadNamesLengths) {
  const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 3, 7, 0};
  const std::string msg = what_of([&] { parse_idx(bytes); });
  EXPECT_NE(msg.find("expected 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("got 2"), std::string::npos) << msg;
}

TEST(Idx, RejectsBadMagicTypeAndTrailing) {
  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{1, 0, 8, 1, 0, 0, 0, 0}), FormatError);
  const std::string type_msg = what_of([] { parse_idx(std::vector<std::uint8_t>{0, 0, 0x0D, 1, 0, 0, 0, 1, 0, 0, 0, 0}); });
  EXPECT_NE(type_msg.find("byte 2"), std::string::npos) << type_msg;
  const std::string trail = what_of([] { parse_idx(std::vector<std::uint8_t>{0, 0, 8, 1, 0, 0, 0, 1, 5, 6}); });
  EXPECT_NE(trail.find("trailing"), std::string::npos) << trail;
  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0, 8}), FormatError);
  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0, 8, 2, 0, 0, 0, 1}), FormatError);
}

TEST(Idx, RoundTripIdentity) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    IdxFile f;
    const std::size_t nd = 1 + rng.below(4);
    std::size_t total = 1;
    for (std::size_t d = 0; d < nd; ++d) {
      f.dims.push_back(static_cast<std::uint32_t>(rng.below(6)));
      total *= f.dims.back();
    }
    f.payload.resize(total);
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.below(256));
    const auto bytes = serialize_idx(f);
    EXPECT_EQ(parse_idx(bytes), f);
    EXPECT_EQ(serialize_idx(parse_idx(bytes)), bytes);
  }
}

TEST(Idx, FullSizeImageFileParses) {
  // Same geometry as the published MNIST training images.
  IdxFile f;
  f.dims = {60000, 28, 28};
  f.payload.assign(60000ull * 28 * 28, 0);
  for (std::size_t i = 0; i < f.payload.size(); i += 97) f.payload[i] = static_cast<std::uint8_t>(i);
  IdxFile labels;
  labels.dims = {60000};
  labels.payload.assign(60000, 3);
  const auto set = labeled_images_from_idx(parse_idx(serialize_idx(f)), parse_idx(serialize_idx(labels)));
  EXPECT_EQ(set.count(), 60000u);
  EXPECT_EQ(set.rows, 28u);
  EXPECT_EQ(set.cols, 28u);
}

TEST(Idx, PublishedMnistWhenAvailable) {
  const char* dir = std::getenv("MTL_MNIST_DIR");
  if (!dir) GTEST_SKIP() << "MTL_MNIST_DIR not set";
  const auto images = read_idx(fs::path(dir) / "train-images-idx3-ubyte");
  const auto labels = read_idx(fs::path(dir) / "train-labels-idx1-ubyte");
  const auto set = labeled_images_from_idx(images, labels, "mnist");
  EXPECT_EQ(set.count(), 60000u);
  EXPECT_EQ(set.rows, 28u);
  EXPECT_EQ(set.cols, 28u);
}

TEST(Idx, LabelCountMismatchRejected) {
  IdxFile imgs{0x08, {2, 2, 2}, std::vector<std::uint8_t>(8, 1)};
  IdxFile labels{0x08, {3}, {1, 2, 3}};
  EXPECT_THROW(labeled_images_from_idx(imgs, labels), FormatError);
}
