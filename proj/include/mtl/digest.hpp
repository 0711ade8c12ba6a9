#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace mtl {

/// Incremental 64-bit FNV-1a. Stable across platforms and runs.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) {
    for (auto b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001B3ull;
    }
  }
  template <typename T>
  void update_values(std::span<const T> values) {
    update(std::as_bytes(values));
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ull;
};

std::string hex_digest(std::uint64_t value);

}  // namespace mtl
