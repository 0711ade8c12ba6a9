#include "mtl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mtl/digest.hpp"

namespace mtl {

std::string hex_digest(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'C', 'K', 'P', 'T', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::string encode_checkpoint(const ParameterList& params, const nlohmann::json& metadata) {
  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", payload.size()}});
    for (double v : p.tensor.data()) put_u64_le(payload, std::bit_cast<std::uint64_t>(v));
  }
  Fnv1a digest;
  digest.update(std::as_bytes(std::span(payload.data(), payload.size())));
  nlohmann::json header = {{"tensors", tensors},
                           {"payload_bytes", payload.size()},
                           {"payload_fnv1a", hex_digest(digest.value())},
                           {"metadata", metadata}};
  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_u64_le(out, header_text.size());
  out += header_text;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic at byte 0");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t header_len = get_u64_le(raw + 8);
  if (header_len > bytes.size() - 16) throw FormatError("checkpoint: header length exceeds file size at byte 8");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header at byte 16: ") + e.what());
  }
  const std::size_t payload_start = 16 + header_len;
  const std::string_view payload = bytes.substr(payload_start);

  Checkpoint ckpt;
  try {
    const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
    if (payload_bytes != payload.size()) {
      throw FormatError("checkpoint: payload is " + std::to_string(payload.size()) + " bytes, header declares " +
                        std::to_string(payload_bytes));
    }
    Fnv1a digest;
    digest.update(std::as_bytes(std::span(payload.data(), payload.size())));
    if (hex_digest(digest.value()) != header.at("payload_fnv1a").get<std::string>()) {
      throw FormatError("checkpoint: payload digest mismatch");
    }
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
      CheckpointEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t n = numel(e.shape);
      if (offset % 8 != 0 || offset > payload.size() || n > (payload.size() - offset) / 8) {
        throw FormatError("checkpoint: tensor '" + e.name + "' extends past the payload (offset " +
                          std::to_string(payload_start + offset) + ")");
      }
      e.values.resize(n);
      const auto* p = reinterpret_cast<const unsigned char*>(payload.data()) + offset;
      for (std::size_t i = 0; i < n; ++i) e.values[i] = std::bit_cast<double>(get_u64_le(p + 8 * i));
      ckpt.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const ParameterList& params, const nlohmann::json& metadata) {
  const std::string bytes = encode_checkpoint(params, metadata);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

void load_into(const Checkpoint& checkpoint, const ParameterList& params) {
  const std::size_t n = std::min(checkpoint.tensors.size(), params.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = checkpoint.tensors[i];
    const auto& p = params[i];
    if (e.name != p.name || e.shape != p.tensor.shape()) {
      throw CheckpointMismatch("checkpoint tensor " + std::to_string(i) + " is '" + e.name + "' " + to_string(e.shape) +
                               ", model expects '" + p.name + "' " + to_string(p.tensor.shape()));
    }
  }
  if (checkpoint.tensors.size() != params.size()) {
    const std::string first = checkpoint.tensors.size() > params.size() ? checkpoint.tensors[n].name : params[n].name;
    throw CheckpointMismatch("checkpoint has " + std::to_string(checkpoint.tensors.size()) + " tensors, model has " +
                             std::to_string(params.size()) + "; first unmatched tensor '" + first + "'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t = params[i].tensor;
    auto dst = t.mutable_data();
    std::copy(checkpoint.tensors[i].values.begin(), checkpoint.tensors[i].values.end(), dst.begin());
  }
}

}  // namespace mtl
