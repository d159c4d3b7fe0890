#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pd {

// Minimal SHA-256, used for parameter checksums, cache fingerprints and
// config hashes. Streaming interface so large parameter stores can be hashed
// without a contiguous copy.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* data, size_t len);
  std::array<uint8_t, 32> finish();

  static std::array<uint8_t, 32> digest(const void* data, size_t len);
  static std::string hex(const std::array<uint8_t, 32>& d);

 private:
  void process_block(const uint8_t* block);

  uint32_t state_[8];
  uint64_t total_len_;
  uint8_t buffer_[64];
  size_t buffer_len_;
};

std::string sha256_hex(const void* data, size_t len);

}  // namespace pd
