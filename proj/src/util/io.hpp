#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "util/errors.hpp"

namespace pd {

// Little-endian binary readers/writers over a growable byte buffer. All file
// formats in this project are explicitly little-endian.

class ByteWriter {
 public:
  void u32(uint32_t v) { put(&v, 4); }
  void u64(uint64_t v) { put(&v, 8); }
  void f32(float v) { put(&v, 4); }
  void bytes(const void* p, size_t n) { put(p, n); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    put(s.data(), s.size());
  }
  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  void put(const void* p, size_t n) {
    const size_t off = buf_.size();
    buf_.resize(off + n);
    std::memcpy(buf_.data() + off, p, n);
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  explicit ByteReader(const std::vector<uint8_t>& v) : p_(v.data()), n_(v.size()) {}

  uint32_t u32() { return get<uint32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  float f32() { return get<float>(); }
  void bytes(void* out, size_t n) {
    require(n);
    std::memcpy(out, p_ + off_, n);
    off_ += n;
  }
  std::string str() {
    const uint32_t len = u32();
    require(len);
    std::string s(reinterpret_cast<const char*>(p_ + off_), len);
    off_ += len;
    return s;
  }
  size_t remaining() const { return n_ - off_; }
  bool done() const { return off_ == n_; }

 private:
  template <typename T>
  T get() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, p_ + off_, sizeof(T));
    off_ += sizeof(T);
    return v;
  }
  void require(size_t n) {
    if (off_ + n > n_) throw IoError("truncated input");
  }
  const uint8_t* p_;
  size_t n_;
  size_t off_ = 0;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path,
                       const std::vector<uint8_t>& data);
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pd
