#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mtl/error.hpp"
#include "mtl/layers.hpp"

namespace mtl {

// File layout:
//   8 bytes   magic "MTLCKPT1"
//   8 bytes   header length H, little-endian u64
//   H bytes   JSON header {"tensors":[{"name","shape","offset"}], "payload_bytes", "payload_fnv1a", "metadata"}
//   payload   little-endian f64 arrays; offsets are bytes from payload start

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointEntry> tensors;
};

/// Checkpoint does not fit the target parameter list.
class CheckpointMismatch : public Error {
 public:
  using Error::Error;
};

std::string encode_checkpoint(const ParameterList& params, const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                      const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies values into `params`. Names, order, and shapes must match exactly;
/// the error names the first mismatched tensor.
void load_into(const Checkpoint& checkpoint, const ParameterList& params);

}  // namespace mtl
