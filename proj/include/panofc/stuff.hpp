#pragma once

#include <cmath>
#include <deque>
#include <vector>

#include "panofc/geometry.hpp"
#include "panofc/grid.hpp"
#include "panofc/optim.hpp"
#include "panofc/tensor.hpp"

namespace panofc {

// Sparse reprojected background: per-pixel optional (stuff class, depth).
// Unassigned pixels hold the unknown sentinel / zero depth.
struct SparseProjection {
  SemanticMap cls;
  DepthMap depth;

  SparseProjection() = default;
  SparseProjection(int h, int w) : cls(h, w, kUnknownClass), depth(h, w, 0.0f) {}

  int h() const { return cls.h(); }
  int w() const { return cls.w(); }
  bool assigned(int y, int x) const { return cls.at(y, x) != kUnknownClass; }

  bool operator==(const SparseProjection&) const = default;
};

// Back-projects every masked pixel with its depth, carries it through the
// camera-frame transform, and re-projects into the target frame with
// nearest-integer rounding.  Pixels landing behind the camera or outside
// the frame are dropped; collisions keep the smaller projected depth.
inline SparseProjection project_background(const SemanticMap& m, const DepthMap& d,
                                           const Intrinsics& K, const RigidTransform& H_t,
                                           const Mask& bg_mask) {
  if (m.h() != d.h() || m.w() != d.w() || m.h() != bg_mask.h() || m.w() != bg_mask.w())
    throw DimError(str("project_background: semantics ", m.h(), "x", m.w(), ", depth ",
                       d.h(), "x", d.w(), ", mask ", bg_mask.h(), "x", bg_mask.w(),
                       " must agree"));
  long long invalid = 0;
  for (int y = 0; y < m.h(); ++y)
    for (int x = 0; x < m.w(); ++x)
      if (bg_mask.at(y, x) && !(d.at(y, x) > 0.0f)) ++invalid;
  if (invalid > 0)
    throw InputError(str("project_background: ", invalid,
                         " masked pixels have invalid depth"));

  SparseProjection out(m.h(), m.w());
  for (int y = 0; y < m.h(); ++y)
    for (int x = 0; x < m.w(); ++x) {
      if (!bg_mask.at(y, x) || m.at(y, x) == kUnknownClass) continue;
      const Vec3 p = H_t.apply(backproject(K, x, y, d.at(y, x)));
      double u = 0.0, v = 0.0;
      if (!project(K, p, u, v)) continue;
      const long ui = std::lround(u), vi = std::lround(v);
      if (ui < 0 || ui >= m.w() || vi < 0 || vi >= m.h()) continue;
      const int ty = static_cast<int>(vi), tx = static_cast<int>(ui);
      const float z = static_cast<float>(p.z);
      if (!out.assigned(ty, tx) || z < out.depth.at(ty, tx)) {
        out.cls.at(ty, tx) = m.at(y, x);
        out.depth.at(ty, tx) = z;
      }
    }
  return out;
}

// Small fully-convolutional completion net: per input frame one channel
// per stuff class (one-hot) plus one scaled-depth channel, three 3x3
// hidden layers with ReLU, and a 1x1 projection to per-class logits.
struct StuffRefiner {
  int stuff_classes = 0;
  int input_frames = 0;
  int hidden = 16;
  double depth_scale = 1.0 / 500.0;  // keeps the depth channel O(1)
  ParamStore params;

  int input_channels() const { return input_frames * (stuff_classes + 1); }

  static StuffRefiner init(int stuff_classes, int input_frames, uint64_t seed,
                           int hidden = 16) {
    if (stuff_classes < 2)
      throw ConfigError(str("refiner: need >= 2 stuff classes, got ", stuff_classes));
    if (input_frames < 1)
      throw ConfigError(str("refiner: need >= 1 input frame, got ", input_frames));
    StuffRefiner r;
    r.stuff_classes = stuff_classes;
    r.input_frames = input_frames;
    r.hidden = hidden;
    Rng rng = Rng(seed).fork(701);
    const int cin = r.input_channels();
    auto bound = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    r.params.create_uniform("refine.conv1.w", Shape{hidden, cin, 3, 3}, bound(cin * 9), rng);
    r.params.create("refine.conv1.b", Shape{hidden});
    r.params.create_uniform("refine.conv2.w", Shape{hidden, hidden, 3, 3},
                            bound(hidden * 9), rng);
    r.params.create("refine.conv2.b", Shape{hidden});
    r.params.create_uniform("refine.conv3.w", Shape{hidden, hidden, 3, 3},
                            bound(hidden * 9), rng);
    r.params.create("refine.conv3.b", Shape{hidden});
    r.params.create_uniform("refine.out.w", Shape{stuff_classes, hidden, 1, 1},
                            bound(hidden), rng);
    r.params.create("refine.out.b", Shape{stuff_classes});
    return r;
  }

  // Stacks the projections oldest->newest into [1, T*(C+1), H, W].
  Tensor input_tensor(const std::vector<SparseProjection>& projs) const {
    if (static_cast<int>(projs.size()) != input_frames)
      throw DimError(str("refiner: got ", projs.size(), " projections, expected ",
                         input_frames));
    const int H = projs[0].h(), W = projs[0].w();
    const size_t npix = static_cast<size_t>(H) * W;
    std::vector<double> data(static_cast<size_t>(input_channels()) * npix, 0.0);
    for (int f = 0; f < input_frames; ++f) {
      const SparseProjection& p = projs[static_cast<size_t>(f)];
      if (p.h() != H || p.w() != W)
        throw DimError(str("refiner: projection ", f, " is ", p.h(), "x", p.w(),
                           ", expected ", H, "x", W));
      const size_t base = static_cast<size_t>(f) * (stuff_classes + 1) * npix;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const size_t px = static_cast<size_t>(y) * W + x;
          if (!p.assigned(y, x)) continue;
          const int c = p.cls.at(y, x);
          if (c >= 0 && c < stuff_classes) data[base + static_cast<size_t>(c) * npix + px] = 1.0;
          data[base + static_cast<size_t>(stuff_classes) * npix + px] =
              p.depth.at(y, x) * depth_scale;
        }
    }
    return Tensor(Shape{1, input_channels(), H, W}, std::move(data));
  }

  // Per-class logits [C, H, W].
  Tensor logits(const std::vector<SparseProjection>& projs) const {
    Tensor x = input_tensor(projs);
    Tensor h1 = relu(conv2d(x, params.at("refine.conv1.w"), params.at("refine.conv1.b")));
    Tensor h2 = relu(conv2d(h1, params.at("refine.conv2.w"), params.at("refine.conv2.b")));
    Tensor h3 = relu(conv2d(h2, params.at("refine.conv3.w"), params.at("refine.conv3.b")));
    Tensor out = conv2d(h3, params.at("refine.out.w"), params.at("refine.out.b"));
    return reshape(out, Shape{stuff_classes, out.dim(2), out.dim(3)});
  }
};

// Argmax over channel 0..C-1 of [C,H,W] logits; ties take the smaller id.
inline SemanticMap argmax_semantics(const Tensor& logits) {
  if (logits.rank() != 3)
    throw DimError(str("argmax_semantics: need [C,H,W], got ", shape_str(logits.shape())));
  const int C = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  const size_t npix = static_cast<size_t>(H) * W;
  SemanticMap out(H, W, 0);
  for (size_t p = 0; p < npix; ++p) {
    int best = 0;
    double bv = logits[static_cast<long long>(p)];
    for (int c = 1; c < C; ++c) {
      double v = logits[static_cast<long long>(c * npix + p)];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.at(static_cast<int>(p) / W, static_cast<int>(p) % W) = static_cast<int16_t>(best);
  }
  return out;
}

enum class RefineMode { learned, nearest_fill };

namespace detail {

// Newest projection wins per pixel.
inline SparseProjection fuse_latest(const std::vector<SparseProjection>& projs) {
  SparseProjection fused(projs[0].h(), projs[0].w());
  for (const SparseProjection& p : projs) {
    if (p.h() != fused.h() || p.w() != fused.w())
      throw DimError(str("fuse: projection sizes differ: ", p.h(), "x", p.w(), " vs ",
                         fused.h(), "x", fused.w()));
    for (int y = 0; y < fused.h(); ++y)
      for (int x = 0; x < fused.w(); ++x)
        if (p.assigned(y, x)) {
          fused.cls.at(y, x) = p.cls.at(y, x);
          fused.depth.at(y, x) = p.depth.at(y, x);
        }
  }
  return fused;
}

}  // namespace detail

// Completes the stacked projections into a dense stuff map.  Learned
// mode runs the refiner and takes the per-pixel argmax; nearest_fill
// keeps the newest projected label per pixel and flood-fills the rest
// from the nearest labeled pixel (4-neighbor BFS, ties -> smaller id).
inline SemanticMap fuse_and_refine(const std::vector<SparseProjection>& projs,
                                   RefineMode mode,
                                   const StuffRefiner* refiner = nullptr) {
  if (projs.empty()) throw UsageError("fuse_and_refine: no projections");
  bool any = false;
  for (const SparseProjection& p : projs)
    for (int y = 0; y < p.h() && !any; ++y)
      for (int x = 0; x < p.w() && !any; ++x)
        if (p.assigned(y, x)) any = true;
  if (!any) throw InputError("fuse_and_refine: no projection has any labeled pixel");

  if (mode == RefineMode::learned) {
    if (refiner == nullptr)
      throw UsageError("fuse_and_refine: learned mode needs a refiner");
    return argmax_semantics(refiner->logits(projs));
  }

  SparseProjection fused = detail::fuse_latest(projs);
  const int H = fused.h(), W = fused.w();
  SemanticMap out = fused.cls;
  std::vector<int> dist(static_cast<size_t>(H) * W, -1);
  std::deque<int> frontier;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (fused.assigned(y, x)) {
        dist[static_cast<size_t>(y) * W + x] = 0;
        frontier.push_back(y * W + x);
      }
  // Layered BFS: a pixel reached by several labels in the same layer
  // takes the smallest class id.
  constexpr int dy[4] = {-1, 1, 0, 0};
  constexpr int dx[4] = {0, 0, -1, 1};
  while (!frontier.empty()) {
    int p = frontier.front();
    frontier.pop_front();
    const int y = p / W, x = p % W;
    const int dcur = dist[static_cast<size_t>(p)];
    for (int k = 0; k < 4; ++k) {
      const int ny = y + dy[k], nx = x + dx[k];
      if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
      const size_t np = static_cast<size_t>(ny) * W + nx;
      if (dist[np] == -1) {
        dist[np] = dcur + 1;
        out.at(ny, nx) = out.at(y, x);
        frontier.push_back(ny * W + nx);
      } else if (dist[np] == dcur + 1 && out.at(y, x) < out.at(ny, nx)) {
        out.at(ny, nx) = out.at(y, x);
      }
    }
  }
  return out;
}

// Mean cross-entropy over the pixels the foreground mask leaves free.
inline Tensor stuff_loss(const Tensor& logits, const SemanticMap& target,
                         const Mask& fg_mask) {
  if (logits.rank() != 3)
    throw DimError(str("stuff_loss: logits must be [C,H,W], got ",
                       shape_str(logits.shape())));
  const int H = logits.dim(1), W = logits.dim(2);
  if (target.h() != H || target.w() != W || fg_mask.h() != H || fg_mask.w() != W)
    throw DimError(str("stuff_loss: target ", target.h(), "x", target.w(), " / mask ",
                       fg_mask.h(), "x", fg_mask.w(), " vs logits ", H, "x", W));
  std::vector<int> classes(static_cast<size_t>(H) * W);
  std::vector<uint8_t> counted(static_cast<size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      classes[static_cast<size_t>(y) * W + x] = target.at(y, x);
      counted[static_cast<size_t>(y) * W + x] = fg_mask.at(y, x) ? 0 : 1;
    }
  return softmax_ce_masked(logits, classes, counted);
}

inline void save_stuff(const StuffRefiner& r, const std::string& path) {
  std::map<std::string, Tensor> meta;
  meta.emplace("meta.stuff.dims",
               Tensor(Shape{4}, {static_cast<double>(r.stuff_classes),
                                 static_cast<double>(r.input_frames),
                                 static_cast<double>(r.hidden), r.depth_scale}));
  save_weights(r.params, path, meta);
}

inline StuffRefiner load_stuff(const std::string& path) {
  std::map<std::string, Tensor> loaded = load_tensors(path);
  auto it = loaded.find("meta.stuff.dims");
  if (it == loaded.end()) throw FormatError("stuff weights: missing tensor 'meta.stuff.dims'");
  const std::vector<double>& d = it->second.values();
  if (d.size() != 4) throw FormatError("stuff weights: malformed 'meta.stuff.dims'");
  StuffRefiner r = StuffRefiner::init(static_cast<int>(d[0]), static_cast<int>(d[1]), 0,
                                      static_cast<int>(d[2]));
  r.depth_scale = d[3];
  load_params_into(r.params, loaded, "stuff weights");
  return r;
}

}  // namespace panofc
