#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "panofc/grid.hpp"

namespace panofc {

// Per-frame box descriptor: center/size in pixels, representative depth
// in meters, plus per-step deltas against the previous present frame.
struct BoxFeature {
  double cx = 0, cy = 0, w = 0, h = 0, d = 0;
  double dcx = 0, dcy = 0, dw = 0, dh = 0, dd = 0;

  std::array<double, 10> to_array() const {
    return {cx, cy, w, h, d, dcx, dcy, dw, dh, dd};
  }

  static BoxFeature from_array(const std::array<double, 10>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9]};
  }

  bool operator==(const BoxFeature&) const = default;
};

// Mask appearance surrogate: a C×h×w float grid; channel 0 is the soft
// occupancy of the mask inside its box, the remaining channels carry
// fixed cosine modulations of it.
struct MaskFeature {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  MaskFeature() = default;
  MaskFeature(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

  double& at(int ch, int y, int x) {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  double at(int ch, int y, int x) const {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }

  bool operator==(const MaskFeature&) const = default;
};

// Per-step ego-motion input: speed and per-step turn angle at the
// current step plus the planar displacement to the next step.
struct EgoVector {
  double v = 0, theta = 0, x_next = 0, y_next = 0, theta_next = 0;

  std::array<double, 5> to_array() const { return {v, theta, x_next, y_next, theta_next}; }

  bool operator==(const EgoVector&) const = default;
};

struct TrackFrame {
  bool present = false;
  BoxFeature box;
  MaskFeature mask;
};

// Per-instance observation history across the frame schedule.
struct Track {
  int instance_id = 0;
  int class_id = 0;  // global class id (stuff classes come first)
  std::vector<TrackFrame> frames;
};

// Mean/std normalization fitted on training data; std floor keeps
// degenerate dimensions harmless.
struct FeatureStats {
  std::vector<double> mean, stdev;

  static FeatureStats fit(const std::vector<std::vector<double>>& rows) {
    FeatureStats s;
    if (rows.empty()) return s;
    const size_t dim = rows[0].size();
    s.mean.assign(dim, 0.0);
    s.stdev.assign(dim, 0.0);
    for (const auto& r : rows)
      for (size_t i = 0; i < dim; ++i) s.mean[i] += r[i];
    for (double& m : s.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (size_t i = 0; i < dim; ++i) {
        double d = r[i] - s.mean[i];
        s.stdev[i] += d * d;
      }
    for (double& v : s.stdev)
      v = std::max(std::sqrt(v / static_cast<double>(rows.size())), 1e-6);
    return s;
  }

  std::vector<double> normalize(const std::vector<double>& x) const {
    if (mean.empty()) return x;
    if (x.size() != mean.size())
      throw DimError(str("feature stats: got ", x.size(), " dims, expected ", mean.size()));
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / stdev[i];
    return out;
  }

  std::vector<double> denormalize(const std::vector<double>& x) const {
    if (mean.empty()) return x;
    if (x.size() != mean.size())
      throw DimError(str("feature stats: got ", x.size(), " dims, expected ", mean.size()));
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * stdev[i] + mean[i];
    return out;
  }
};

// Median with the even-count convention: mean of the two middle values.
inline double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of an empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Mean of the mask values over the pixel block each output cell covers
// inside the box [y0,y1)×[x0,x1); blocks are at least one pixel.
inline std::vector<double> box_mean_resample(const Mask& mask, int y0, int x0, int y1,
                                             int x1, int oh, int ow) {
  if (y1 <= y0 || x1 <= x0)
    throw DimError(str("box_mean_resample: empty box [", y0, ",", y1, ")x[", x0, ",",
                       x1, ")"));
  const int bh = y1 - y0, bw = x1 - x0;
  std::vector<double> out(static_cast<size_t>(oh) * ow, 0.0);
  for (int gy = 0; gy < oh; ++gy) {
    int py0 = y0 + static_cast<int>(std::floor(static_cast<double>(gy) * bh / oh));
    int py1 = y0 + static_cast<int>(std::ceil(static_cast<double>(gy + 1) * bh / oh));
    py0 = std::min(py0, y1 - 1);
    py1 = std::max(py1, py0 + 1);
    py1 = std::min(py1, y1);
    for (int gx = 0; gx < ow; ++gx) {
      int px0 = x0 + static_cast<int>(std::floor(static_cast<double>(gx) * bw / ow));
      int px1 = x0 + static_cast<int>(std::ceil(static_cast<double>(gx + 1) * bw / ow));
      px0 = std::min(px0, x1 - 1);
      px1 = std::max(px1, px0 + 1);
      px1 = std::min(px1, x1);
      double acc = 0.0;
      for (int y = py0; y < py1; ++y)
        for (int x = px0; x < px1; ++x) acc += mask.at(y, x) ? 1.0 : 0.0;
      out[static_cast<size_t>(gy) * ow + gx] =
          acc / (static_cast<double>(py1 - py0) * (px1 - px0));
    }
  }
  return out;
}

// Fills a MaskFeature from a mask crop: channel 0 is the soft occupancy,
// channels k>0 multiply it by a fixed cosine basis so that appearance
// targets are informative beyond plain area.
inline MaskFeature make_mask_feature(const Mask& mask, int y0, int x0, int y1, int x1,
                                     int channels, int gh, int gw) {
  MaskFeature f(channels, gh, gw);
  std::vector<double> occ = box_mean_resample(mask, y0, x0, y1, x1, gh, gw);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x) f.at(0, y, x) = occ[static_cast<size_t>(y) * gw + x];
  constexpr double kPi = 3.14159265358979323846;
  for (int ch = 1; ch < channels; ++ch) {
    const int ky = 1 + (ch - 1) / 2;
    const int kx = 1 + (ch - 1) % 2;
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) {
        double basis = std::cos(kPi * ky * (y + 0.5) / gh) *
                       std::cos(kPi * kx * (x + 0.5) / gw);
        f.at(ch, y, x) = f.at(0, y, x) * basis;
      }
  }
  return f;
}

}  // namespace panofc
