#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "panofc/common.hpp"

namespace panofc {

// Little-endian binary writer over a growable byte buffer.  Files are
// written atomically at the end via write_file().
class BinaryWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }

  void u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
  }

  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  void f32(float v) {
    uint32_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }

  void f64(double v) {
    uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }

  void bytes(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }

  void magic(const char (&m)[5]) { bytes(m, 4); }

  // Length-prefixed UTF-8 string (u32 length).
  void string(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  size_t offset() const { return buf_.size(); }
  const std::vector<uint8_t>& buffer() const { return buf_; }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(str("cannot open '", path, "' for writing"));
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw FormatError(str("short write to '", path, "'"));
  }

 private:
  std::vector<uint8_t> buf_;
};

// Little-endian binary reader over an in-memory buffer; throws
// FormatError with the current byte offset on truncation.
class BinaryReader {
 public:
  explicit BinaryReader(std::vector<uint8_t> buf) : buf_(std::move(buf)) {}

  static BinaryReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(str("cannot open '", path, "' for reading"));
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    return BinaryReader(std::move(buf));
  }

  uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }

  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    uint32_t bits = u32();
    float v = 0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  double f64() {
    uint64_t bits = u64();
    double v = 0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  void magic(const char (&m)[5], const char* what) {
    size_t at = pos_;
    need(4);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0)
      throw FormatError(str("bad ", what, " magic at byte ", at));
    pos_ += 4;
  }

  std::string string() {
    uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  size_t offset() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void expect_end(const char* what) const {
    if (!at_end())
      throw FormatError(str("trailing bytes in ", what, " at byte ", pos_));
  }

 private:
  void need(size_t n) const {
    if (buf_.size() - pos_ < n)
      throw FormatError(str("truncated data: need ", n, " bytes at byte ", pos_,
                            ", have ", buf_.size() - pos_));
  }

  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
};

}  // namespace panofc
