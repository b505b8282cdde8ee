#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "panofc/grid.hpp"

namespace panofc {

// Final output raster: per-pixel (class, instance).  Instance 0 means
// stuff; positive ids are 1-based indices into the instance list that
// produced the map.
struct PanopticMap {
  Grid<int16_t> cls;
  Grid<int32_t> inst;

  PanopticMap() = default;
  PanopticMap(int h, int w, int16_t fill_class = kUnknownClass)
      : cls(h, w, fill_class), inst(h, w, 0) {}

  int h() const { return cls.h(); }
  int w() const { return cls.w(); }

  bool operator==(const PanopticMap&) const = default;
};

// One forecast instance ready for depth-ordered aggregation.
struct InstanceForecast {
  Mask mask;
  int class_id = 0;
  double depth = 0.0;        // representative z-depth used for ordering
  double confidence = 1.0;   // carried through for AP scoring
};

// Depth-ordered painter's aggregation: start from the background
// semantics (instance 0), then paste instances from farthest to
// nearest so that nearer instances overwrite.  Equal depths paste the
// larger input index first, so the smaller index ends up on top.
// Instance ids are 1..N in input order.
inline PanopticMap aggregate(const SemanticMap& bg,
                             const std::vector<InstanceForecast>& instances) {
  PanopticMap out(bg.h(), bg.w());
  out.cls = bg;
  for (size_t i = 0; i < instances.size(); ++i) {
    const InstanceForecast& inst = instances[i];
    if (inst.mask.h() != bg.h() || inst.mask.w() != bg.w())
      throw UsageError(str("aggregate: instance ", i + 1, " mask is ", inst.mask.h(), "x",
                           inst.mask.w(), ", background is ", bg.h(), "x", bg.w()));
    if (!std::isfinite(inst.depth) || inst.depth <= 0.0)
      throw InputError(str("aggregate: instance ", i + 1, " has non-positive depth ",
                           inst.depth));
  }
  std::vector<size_t> order(instances.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (instances[a].depth != instances[b].depth)
      return instances[a].depth > instances[b].depth;
    return a > b;
  });
  for (size_t idx : order) {
    const InstanceForecast& inst = instances[idx];
    const int32_t id = static_cast<int32_t>(idx) + 1;
    const int16_t c = static_cast<int16_t>(inst.class_id);
    for (int y = 0; y < bg.h(); ++y)
      for (int x = 0; x < bg.w(); ++x)
        if (inst.mask.at(y, x)) {
          out.cls.at(y, x) = c;
          out.inst.at(y, x) = id;
        }
  }
  return out;
}

}  // namespace panofc
