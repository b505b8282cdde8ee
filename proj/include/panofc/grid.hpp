#pragma once

#include <cstdint>
#include <vector>

#include "panofc/common.hpp"

namespace panofc {

// Dense H×W raster with row-major storage.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int h, int w, T fill = T{})
      : h_(h), w_(w), v_(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {
    if (h < 0 || w < 0) throw DimError(str("grid: negative size ", h, "x", w));
  }

  int h() const { return h_; }
  int w() const { return w_; }
  long long pixels() const { return static_cast<long long>(h_) * w_; }
  bool empty() const { return v_.empty(); }

  T& at(int y, int x) { return v_[static_cast<size_t>(y) * w_ + x]; }
  const T& at(int y, int x) const { return v_[static_cast<size_t>(y) * w_ + x]; }
  T& operator()(int y, int x) { return at(y, x); }
  const T& operator()(int y, int x) const { return at(y, x); }

  std::vector<T>& data() { return v_; }
  const std::vector<T>& data() const { return v_; }

  bool same_size(const Grid& o) const { return h_ == o.h_ && w_ == o.w_; }

  long long count(T value) const {
    long long n = 0;
    for (const T& v : v_) n += (v == value) ? 1 : 0;
    return n;
  }

  bool operator==(const Grid&) const = default;

 private:
  int h_ = 0, w_ = 0;
  std::vector<T> v_;
};

// Per-pixel class ids; kUnknownClass marks unlabeled pixels.
using SemanticMap = Grid<int16_t>;
inline constexpr int16_t kUnknownClass = -1;

// Per-pixel z-depth along the camera axis; kInvalidDepth marks holes.
using DepthMap = Grid<float>;
inline constexpr float kInvalidDepth = 0.0f;

using Mask = Grid<uint8_t>;

// Run-length encoding of a binary mask: alternating run lengths starting
// with a (possibly zero-length) run of zeros.
inline std::vector<uint32_t> rle_encode(const Mask& m) {
  std::vector<uint32_t> runs;
  uint8_t current = 0;
  uint32_t len = 0;
  for (uint8_t v : m.data()) {
    uint8_t bit = v ? 1 : 0;
    if (bit == current) {
      ++len;
    } else {
      runs.push_back(len);
      current = bit;
      len = 1;
    }
  }
  runs.push_back(len);
  return runs;
}

inline Mask rle_decode(int h, int w, const std::vector<uint32_t>& runs) {
  Mask m(h, w);
  size_t pos = 0;
  uint8_t current = 0;
  for (uint32_t run : runs) {
    if (pos + run > m.data().size())
      throw FormatError(str("mask RLE overruns ", h, "x", w, " at pixel ", pos));
    for (uint32_t i = 0; i < run; ++i) m.data()[pos++] = current;
    current = current ? 0 : 1;
  }
  if (pos != m.data().size())
    throw FormatError(str("mask RLE covers ", pos, " of ", m.data().size(), " pixels"));
  return m;
}

}  // namespace panofc
