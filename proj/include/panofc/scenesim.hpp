#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "panofc/geometry.hpp"
#include "panofc/grid.hpp"
#include "panofc/io.hpp"
#include "panofc/panoptic.hpp"
#include "panofc/random.hpp"
#include "panofc/track.hpp"

namespace panofc {

// ---------------------------------------------------------------------------
// Scene specification
// ---------------------------------------------------------------------------

// World layout: the vehicle starts at the world origin heading +x on a
// ground plane z=0.  A road strip |y| <= road_half_width is flanked by
// terrain, vertical walls stand at y = +/- wall_offset, everything else
// is sky at depth_max.  Objects are upright billboards (rectangles or
// ellipses) that always face the camera and move with constant speed
// and turn rate on the ground plane.
struct SceneSpec {
  uint64_t seed = 7;
  int height = 64;
  int width = 96;
  double focal = 70.0;          // fx = fy, principal point at the center
  int stuff_classes = 4;        // road, terrain, wall, sky
  int thing_classes = 2;        // even classes rectangles, odd ellipses
  int min_objects = 2;
  int max_objects = 4;
  int frames = 16;
  double dt = 0.0625;
  double depth_max = 500.0;
  double camera_height = 1.5;
  double road_half_width = 6.0;
  double wall_offset = 14.0;
  double wall_height = 5.0;
  double cam_speed_min = 6.0;   // m/s
  double cam_speed_max = 10.0;
  double cam_yaw_amp = 0.25;    // rad/s, sinusoidal yaw-rate amplitude cap
  double object_speed_max = 5.0;
  double object_turn_max = 0.6; // rad/s
  double object_dist_min = 8.0;   // spawn depth range, meters
  double object_dist_max = 28.0;

  void validate() const {
    if (height < 16 || width < 16)
      throw ConfigError(str("scene: height/width must be >= 16, got ", height, "x", width));
    if (!(focal > 0.0)) throw ConfigError(str("scene: focal must be positive, got ", focal));
    if (stuff_classes < 2)
      throw ConfigError(str("scene: stuff_classes must be >= 2, got ", stuff_classes));
    if (thing_classes < 1)
      throw ConfigError(str("scene: thing_classes must be >= 1, got ", thing_classes));
    if (min_objects < 0 || max_objects < min_objects)
      throw ConfigError(str("scene: bad object count range [", min_objects, ",",
                            max_objects, "]"));
    if (frames < 1) throw ConfigError(str("scene: frames must be >= 1, got ", frames));
    if (!(dt > 0.0)) throw ConfigError(str("scene: dt must be positive, got ", dt));
    if (!(depth_max > 0.0))
      throw ConfigError(str("scene: depth_max must be positive, got ", depth_max));
    if (!(camera_height > 0.0))
      throw ConfigError(str("scene: camera_height must be positive, got ", camera_height));
    if (!(road_half_width > 0.0))
      throw ConfigError(str("scene: road_half_width must be positive, got ",
                            road_half_width));
    if (!(wall_offset > road_half_width))
      throw ConfigError(str("scene: wall_offset must exceed road_half_width, got ",
                            wall_offset));
    if (!(wall_height > 0.0))
      throw ConfigError(str("scene: wall_height must be positive, got ", wall_height));
    if (cam_speed_min < 0.0 || cam_speed_max < cam_speed_min)
      throw ConfigError(str("scene: bad camera speed range [", cam_speed_min, ",",
                            cam_speed_max, "]"));
    if (cam_yaw_amp < 0.0)
      throw ConfigError(str("scene: cam_yaw_amp must be >= 0, got ", cam_yaw_amp));
    if (object_speed_max < 0.0)
      throw ConfigError(str("scene: object_speed_max must be >= 0, got ",
                            object_speed_max));
    if (object_turn_max < 0.0)
      throw ConfigError(str("scene: object_turn_max must be >= 0, got ", object_turn_max));
    if (!(object_dist_min > 0.0) || object_dist_max < object_dist_min)
      throw ConfigError(str("scene: bad object distance range [", object_dist_min, ",",
                            object_dist_max, "]"));
  }

  Intrinsics intrinsics() const {
    return {focal, focal, (width - 1) * 0.5, (height - 1) * 0.5};
  }

  // Stuff class roles, collapsed when fewer classes are configured.
  int road_class() const { return 0; }
  int terrain_class() const { return 1 % stuff_classes; }
  int wall_class() const { return std::min(2, stuff_classes - 1); }
  int sky_class() const { return std::min(3, stuff_classes - 1); }
};

// Camera mounted at the given height: vehicle x/y/z (front/left/up)
// to camera x/y/z (right/down/forward).
inline Extrinsics default_extrinsics(double camera_height) {
  return {RigidTransform::from_array({0, -1, 0, 0,
                                      0, 0, -1, camera_height,
                                      1, 0, 0, 0,
                                      0, 0, 0, 1})};
}

// ---------------------------------------------------------------------------
// World model
// ---------------------------------------------------------------------------

struct Billboard {
  int instance_id = 0;  // 1-based
  int class_id = 0;     // global id (>= stuff_classes)
  int shape = 0;        // 0 rectangle, 1 ellipse
  double width = 1.0, height = 1.0;  // meters
  double speed = 0.0, turn_rate = 0.0;
  std::vector<PlanarPose> poses;     // per frame, world ground position + heading
};

// Camera-facing billboard placement at one frame: center sits at half
// height above the ground position, the normal points horizontally at
// the camera.
struct BillboardState {
  Vec3 center;
  Vec3 axis_u;   // horizontal in-plane axis
  Vec3 normal;   // horizontal, toward the camera
  double width = 0, height = 0;
  int shape = 0;
  int class_id = 0;
  int instance_id = 0;
};

struct SceneModel {
  SceneSpec spec;
  Extrinsics extrinsics;
  std::vector<Odometry> odometry;            // per frame (motion k -> k+1)
  std::vector<RigidTransform> world_from_veh;  // per frame
  std::vector<Billboard> objects;

  RigidTransform cam_from_world(int frame) const {
    return extrinsics.cam_from_veh * world_from_veh[static_cast<size_t>(frame)].inverse();
  }

  BillboardState billboard_state(int frame, int obj, const Vec3& cam_center_world) const {
    const Billboard& b = objects[static_cast<size_t>(obj)];
    const PlanarPose& p = b.poses[static_cast<size_t>(frame)];
    BillboardState s;
    s.center = {p.x, p.y, 0.5 * b.height};
    Vec3 to_cam = {cam_center_world.x - p.x, cam_center_world.y - p.y, 0.0};
    double n = to_cam.norm();
    s.normal = n > 1e-9 ? to_cam * (1.0 / n) : Vec3{1, 0, 0};
    s.axis_u = Vec3{0, 0, 1}.cross(s.normal).normalized();
    s.width = b.width;
    s.height = b.height;
    s.shape = b.shape;
    s.class_id = b.class_id;
    s.instance_id = b.instance_id;
    return s;
  }
};

inline SceneModel build_scene_model(const SceneSpec& spec) {
  spec.validate();
  SceneModel m;
  m.spec = spec;
  m.extrinsics = default_extrinsics(spec.camera_height);

  Rng cam_rng = Rng(spec.seed).fork(1);
  const double two_pi = 6.283185307179586476925286766559;
  const double v_base = cam_rng.uniform(spec.cam_speed_min, spec.cam_speed_max);
  const double v_amp = 0.15 * v_base;
  const double v_freq = cam_rng.uniform(0.4, 1.0);
  const double v_phase = cam_rng.uniform(0.0, two_pi);
  const double yaw_amp = spec.cam_yaw_amp * cam_rng.uniform(0.3, 1.0);
  const double yaw_freq = cam_rng.uniform(0.3, 0.8);
  const double yaw_phase = cam_rng.uniform(0.0, two_pi);

  m.odometry.reserve(static_cast<size_t>(spec.frames));
  for (int k = 0; k < spec.frames; ++k) {
    const double t = k * spec.dt;
    Odometry o;
    o.v = v_base + v_amp * std::sin(two_pi * v_freq * t + v_phase);
    o.yaw_rate = yaw_amp * std::sin(two_pi * yaw_freq * t + yaw_phase);
    o.dt = spec.dt;
    m.odometry.push_back(o);
  }

  m.world_from_veh.assign(1, RigidTransform{});
  for (int k = 0; k + 1 < spec.frames; ++k)
    m.world_from_veh.push_back(m.world_from_veh.back() *
                               vehicle_transform(step_pose(m.odometry[static_cast<size_t>(k)])));

  Rng obj_rng = Rng(spec.seed).fork(2);
  const int count = obj_rng.range(spec.min_objects, spec.max_objects);
  const Intrinsics intr = spec.intrinsics();
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Billboard b;
      b.instance_id = i + 1;
      const int local_class = static_cast<int>(obj_rng.below(
          static_cast<uint64_t>(spec.thing_classes)));
      b.class_id = spec.stuff_classes + local_class;
      b.shape = local_class % 2;
      b.width = obj_rng.uniform(1.0, 3.0);
      b.height = obj_rng.uniform(1.0, 2.5);
      const double dist = obj_rng.uniform(spec.object_dist_min, spec.object_dist_max);
      const double half_vis = dist * (spec.width * 0.5) / spec.focal;
      const double lateral = obj_rng.uniform(-0.8, 0.8) * half_vis;
      b.speed = obj_rng.uniform(0.0, spec.object_speed_max);
      b.turn_rate = obj_rng.uniform(-spec.object_turn_max, spec.object_turn_max);
      PlanarPose pose{dist, lateral, obj_rng.uniform(0.0, two_pi)};

      // Reject placements that start invisible or sub-pixel sized.
      Vec3 center_veh{pose.x, pose.y, 0.5 * b.height};
      Vec3 center_cam = m.extrinsics.cam_from_veh.apply(center_veh);
      double u = 0, v = 0;
      if (!project(intr, center_cam, u, v)) continue;
      if (u < 4.0 || u > spec.width - 5.0 || v < 4.0 || v > spec.height - 5.0) continue;
      if (b.width * spec.focal / center_cam.z < 3.0) continue;
      if (b.height * spec.focal / center_cam.z < 3.0) continue;

      b.poses.assign(1, pose);
      for (int k = 0; k + 1 < spec.frames; ++k) {
        PlanarPose d = step_pose({b.speed, b.turn_rate, spec.dt});
        pose = compose(pose, d);
        b.poses.push_back(pose);
      }
      m.objects.push_back(std::move(b));
      placed = true;
    }
    if (!placed)
      throw GenError(str("scene: failed to place object ", i + 1, " after 100 attempts"));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Rendered sequence
// ---------------------------------------------------------------------------

struct InstanceMask {
  int instance_id = 0;
  int class_id = 0;
  Mask mask;

  bool operator==(const InstanceMask&) const = default;
};

struct SceneFrame {
  SemanticMap semantics;
  DepthMap depth;
  std::vector<InstanceMask> instances;  // visible instances, ascending id
  Odometry odom;                        // motion from this frame to the next

  bool operator==(const SceneFrame&) const = default;
};

struct SceneSequence {
  int stuff_classes = 0;
  int thing_classes = 0;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  double depth_max = 0.0;
  std::vector<SceneFrame> frames;
  std::vector<RigidTransform> step_cam;  // [k]: camera frame k -> k+1

  bool operator==(const SceneSequence&) const = default;

  int total_classes() const { return stuff_classes + thing_classes; }
  int h() const { return frames.empty() ? 0 : frames[0].semantics.h(); }
  int w() const { return frames.empty() ? 0 : frames[0].semantics.w(); }

  // Camera-coordinate transform carrying frame `from` points into frame `to`.
  RigidTransform transform(int from, int to) const {
    const int n = static_cast<int>(frames.size());
    if (from < 0 || from >= n || to < 0 || to >= n)
      throw UsageError(str("sequence transform: frames ", from, " -> ", to,
                           " out of range [0,", n - 1, "]"));
    if (from == to) return RigidTransform{};
    if (from < to)
      return chain(std::span<const RigidTransform>(step_cam.data() + from,
                                                   static_cast<size_t>(to - from)));
    return transform(to, from).inverse();
  }

  // Union of the frame's instance masks.
  Mask foreground(int frame) const {
    const SceneFrame& f = frames.at(static_cast<size_t>(frame));
    Mask out(f.semantics.h(), f.semantics.w(), 0);
    for (const InstanceMask& im : f.instances)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x)
          if (im.mask.at(y, x)) out.at(y, x) = 1;
    return out;
  }

  Mask background(int frame) const {
    Mask fg = foreground(frame);
    for (int y = 0; y < fg.h(); ++y)
      for (int x = 0; x < fg.w(); ++x) fg.at(y, x) = fg.at(y, x) ? 0 : 1;
    return fg;
  }

  PanopticMap panoptic(int frame) const {
    const SceneFrame& f = frames.at(static_cast<size_t>(frame));
    PanopticMap out(f.semantics.h(), f.semantics.w());
    out.cls = f.semantics;
    for (const InstanceMask& im : f.instances)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x)
          if (im.mask.at(y, x)) out.inst.at(y, x) = im.instance_id;
    return out;
  }
};

namespace detail {

struct RayHit {
  double t = 0.0;
  int class_id = -1;
};

// Nearest background surface along a world-space ray; sky when nothing
// closer than depth_max.
inline RayHit background_hit(const SceneSpec& spec, const Vec3& origin, const Vec3& dir) {
  RayHit best{spec.depth_max, spec.sky_class()};
  if (dir.z < -1e-12) {
    const double t = -origin.z / dir.z;
    if (t > 1e-9 && t < best.t) {
      const double y = origin.y + t * dir.y;
      best = {t, std::fabs(y) <= spec.road_half_width ? spec.road_class()
                                                      : spec.terrain_class()};
    }
  }
  if (std::fabs(dir.y) > 1e-12) {
    for (double side : {spec.wall_offset, -spec.wall_offset}) {
      const double t = (side - origin.y) / dir.y;
      if (t > 1e-9 && t < best.t) {
        const double z = origin.z + t * dir.z;
        if (z >= 0.0 && z <= spec.wall_height) best = {t, spec.wall_class()};
      }
    }
  }
  return best;
}

// Ray / billboard intersection distance, or nullopt when the ray misses.
inline std::optional<double> billboard_hit(const BillboardState& s, const Vec3& origin,
                                           const Vec3& dir) {
  const double denom = dir.dot(s.normal);
  if (std::fabs(denom) < 1e-12) return std::nullopt;
  const double t = (s.center - origin).dot(s.normal) / denom;
  if (t <= 1e-9) return std::nullopt;
  const Vec3 p = origin + dir * t;
  const double a = (p - s.center).dot(s.axis_u);
  const double b = p.z - s.center.z;
  if (s.shape == 0) {
    if (std::fabs(a) > 0.5 * s.width || std::fabs(b) > 0.5 * s.height) return std::nullopt;
  } else {
    const double ea = 2.0 * a / s.width, eb = 2.0 * b / s.height;
    if (ea * ea + eb * eb > 1.0) return std::nullopt;
  }
  return t;
}

}  // namespace detail

// Renders the model into per-frame semantics / depth / instance masks.
// Background classes are shaded per pixel; each object only visits the
// pixel box spanned by its projected corners and competes on depth.
inline SceneSequence render_scene(const SceneModel& m) {
  const SceneSpec& spec = m.spec;
  const Intrinsics intr = spec.intrinsics();
  SceneSequence seq;
  seq.stuff_classes = spec.stuff_classes;
  seq.thing_classes = spec.thing_classes;
  seq.intrinsics = intr;
  seq.extrinsics = m.extrinsics;
  seq.depth_max = spec.depth_max;

  for (int k = 0; k < spec.frames; ++k) {
    const RigidTransform cam_from_world = m.cam_from_world(k);
    const RigidTransform world_from_cam = cam_from_world.inverse();
    const Vec3 origin = world_from_cam.translation();

    SceneFrame frame;
    frame.semantics = SemanticMap(spec.height, spec.width, kUnknownClass);
    frame.depth = DepthMap(spec.height, spec.width, 0.0f);
    frame.odom = m.odometry[static_cast<size_t>(k)];
    std::vector<double> zbuf(static_cast<size_t>(spec.height) * spec.width, 0.0);
    Grid<int32_t> inst(spec.height, spec.width, 0);

    std::vector<Vec3> dirs(static_cast<size_t>(spec.height) * spec.width);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        Vec3 d_cam{(x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0};
        dirs[static_cast<size_t>(y) * spec.width + x] = world_from_cam.rotate(d_cam);
        detail::RayHit hit = detail::background_hit(spec, origin,
                                                    dirs[static_cast<size_t>(y) * spec.width + x]);
        frame.semantics.at(y, x) = static_cast<int16_t>(hit.class_id);
        zbuf[static_cast<size_t>(y) * spec.width + x] = hit.t;
      }

    for (size_t oi = 0; oi < m.objects.size(); ++oi) {
      const BillboardState s = m.billboard_state(k, static_cast<int>(oi), origin);
      // Pixel bounds from the projected plane corners; fall back to the
      // full frame if any corner lands behind the camera.
      int x0 = 0, x1 = spec.width - 1, y0 = 0, y1 = spec.height - 1;
      double umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
      bool behind = false;
      for (int cu = -1; cu <= 1; cu += 2)
        for (int cv = -1; cv <= 1; cv += 2) {
          Vec3 corner = s.center + s.axis_u * (cu * 0.5 * s.width) +
                        Vec3{0, 0, 1} * (cv * 0.5 * s.height);
          Vec3 pc = cam_from_world.apply(corner);
          double u = 0, v = 0;
          if (!project(intr, pc, u, v)) {
            behind = true;
            break;
          }
          umin = std::min(umin, u);
          umax = std::max(umax, u);
          vmin = std::min(vmin, v);
          vmax = std::max(vmax, v);
        }
      if (!behind) {
        x0 = std::max(0, static_cast<int>(std::floor(umin)) - 1);
        x1 = std::min(spec.width - 1, static_cast<int>(std::ceil(umax)) + 1);
        y0 = std::max(0, static_cast<int>(std::floor(vmin)) - 1);
        y1 = std::min(spec.height - 1, static_cast<int>(std::ceil(vmax)) + 1);
        if (x0 > x1 || y0 > y1) continue;
      }
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const size_t px = static_cast<size_t>(y) * spec.width + x;
          std::optional<double> t = detail::billboard_hit(s, origin, dirs[px]);
          if (!t || *t > spec.depth_max) continue;
          if (*t < zbuf[px]) {
            zbuf[px] = *t;
            frame.semantics.at(y, x) = static_cast<int16_t>(s.class_id);
            inst.at(y, x) = s.instance_id;
          }
        }
    }

    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        frame.depth.at(y, x) = static_cast<float>(zbuf[static_cast<size_t>(y) * spec.width + x]);

    for (const Billboard& b : m.objects) {
      if (inst.count(b.instance_id) == 0) continue;
      InstanceMask im;
      im.instance_id = b.instance_id;
      im.class_id = b.class_id;
      im.mask = Mask(spec.height, spec.width, 0);
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
          if (inst.at(y, x) == b.instance_id) im.mask.at(y, x) = 1;
      frame.instances.push_back(std::move(im));
    }
    seq.frames.push_back(std::move(frame));
  }

  for (int k = 0; k + 1 < spec.frames; ++k)
    seq.step_cam.push_back(camera_step(m.odometry[static_cast<size_t>(k)], m.extrinsics));
  return seq;
}

inline SceneSequence generate(const SceneSpec& spec) {
  return render_scene(build_scene_model(spec));
}

// ---------------------------------------------------------------------------
// Track derivation
// ---------------------------------------------------------------------------

struct TrackOptions {
  std::vector<int> frame_indices;  // observation schedule; empty = every frame
  double dropout_rate = 0.0;       // chance a visible observation is hidden
  double feature_noise = 0.0;      // stdev added to box fields and mask cells
  uint64_t seed = 0;
  int mask_channels = 8;
  int mask_h = 7;
  int mask_w = 7;
};

// Extracts per-instance box/mask observation tracks over the schedule.
// Box centers and sizes are in continuous pixel units, depth is the
// median of depths under the mask (even count: mean of the middle two).
// Deltas compare against the previous present entry of the same track.
inline std::vector<Track> derive_tracks(const SceneSequence& seq, const TrackOptions& opt) {
  std::vector<int> schedule = opt.frame_indices;
  if (schedule.empty()) {
    schedule.resize(seq.frames.size());
    for (size_t i = 0; i < schedule.size(); ++i) schedule[i] = static_cast<int>(i);
  }
  for (int f : schedule)
    if (f < 0 || f >= static_cast<int>(seq.frames.size()))
      throw UsageError(str("derive_tracks: frame index ", f, " out of range [0,",
                           seq.frames.size() - 1, "]"));

  std::map<int, int> classes;  // instance id -> class id
  for (const SceneFrame& fr : seq.frames)
    for (const InstanceMask& im : fr.instances) classes[im.instance_id] = im.class_id;

  Rng base(opt.seed);
  std::vector<Track> tracks;
  for (const auto& [id, cls] : classes) {
    Track tr;
    tr.instance_id = id;
    tr.class_id = cls;
    std::optional<BoxFeature> prev;
    for (int f : schedule) {
      const SceneFrame& fr = seq.frames[static_cast<size_t>(f)];
      const InstanceMask* im = nullptr;
      for (const InstanceMask& cand : fr.instances)
        if (cand.instance_id == id) im = &cand;

      TrackFrame tf;
      Rng rng = base.fork(static_cast<uint64_t>(id) * 1000003ULL +
                          static_cast<uint64_t>(f));
      const bool dropped = opt.dropout_rate > 0.0 && rng.chance(opt.dropout_rate);
      if (im != nullptr && !dropped) {
        int y0 = seq.h(), y1 = -1, x0 = seq.w(), x1 = -1;
        std::vector<double> depths;
        for (int y = 0; y < seq.h(); ++y)
          for (int x = 0; x < seq.w(); ++x)
            if (im->mask.at(y, x)) {
              y0 = std::min(y0, y);
              y1 = std::max(y1, y);
              x0 = std::min(x0, x);
              x1 = std::max(x1, x);
              if (fr.depth.at(y, x) > 0.0f) depths.push_back(fr.depth.at(y, x));
            }
        tf.present = true;
        tf.box.cx = 0.5 * (x0 + x1 + 1);
        tf.box.cy = 0.5 * (y0 + y1 + 1);
        tf.box.w = x1 + 1 - x0;
        tf.box.h = y1 + 1 - y0;
        tf.box.d = depths.empty() ? 0.0 : median(depths);
        tf.mask = make_mask_feature(im->mask, y0, x0, y1 + 1, x1 + 1, opt.mask_channels,
                                    opt.mask_h, opt.mask_w);
        if (opt.feature_noise > 0.0) {
          tf.box.cx += opt.feature_noise * rng.normal();
          tf.box.cy += opt.feature_noise * rng.normal();
          tf.box.w = std::max(1.0, tf.box.w + opt.feature_noise * rng.normal());
          tf.box.h = std::max(1.0, tf.box.h + opt.feature_noise * rng.normal());
          tf.box.d = std::max(1e-3, tf.box.d + opt.feature_noise * rng.normal());
          for (double& v : tf.mask.v) v += opt.feature_noise * rng.normal();
        }
        if (prev) {
          tf.box.dcx = tf.box.cx - prev->cx;
          tf.box.dcy = tf.box.cy - prev->cy;
          tf.box.dw = tf.box.w - prev->w;
          tf.box.dh = tf.box.h - prev->h;
          tf.box.dd = tf.box.d - prev->d;
        }
        prev = tf.box;
      }
      tr.frames.push_back(std::move(tf));
    }
    tracks.push_back(std::move(tr));
  }
  return tracks;
}

// Per-interval ego-motion inputs over the schedule: speed and per-frame
// turn at the interval start plus the accumulated planar displacement
// to the next scheduled frame, expressed in the starting vehicle frame.
inline std::vector<EgoVector> ego_vectors(const SceneSequence& seq,
                                          const std::vector<int>& schedule) {
  if (schedule.size() < 2)
    throw UsageError("ego_vectors: schedule needs at least two frames");
  std::vector<EgoVector> out;
  for (size_t s = 0; s + 1 < schedule.size(); ++s) {
    const int f0 = schedule[s], f1 = schedule[s + 1];
    if (f0 < 0 || f1 <= f0 || f1 >= static_cast<int>(seq.frames.size()) + 1)
      throw UsageError(str("ego_vectors: bad interval ", f0, " -> ", f1));
    PlanarPose acc{};
    for (int f = f0; f < f1; ++f)
      acc = compose(acc, step_pose(seq.frames[static_cast<size_t>(f)].odom));
    EgoVector e;
    e.v = seq.frames[static_cast<size_t>(f0)].odom.v;
    e.theta = seq.frames[static_cast<size_t>(f0)].odom.yaw_rate *
              seq.frames[static_cast<size_t>(f0)].odom.dt;
    e.x_next = acc.x;
    e.y_next = acc.y;
    e.theta_next = acc.theta;
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence serialization
// ---------------------------------------------------------------------------

inline void save_sequence(const SceneSequence& seq, const std::string& path) {
  BinaryWriter w;
  w.magic("PFD1");
  w.u16(static_cast<uint16_t>(seq.stuff_classes));
  w.u16(static_cast<uint16_t>(seq.thing_classes));
  w.u32(static_cast<uint32_t>(seq.h()));
  w.u32(static_cast<uint32_t>(seq.w()));
  w.f64(seq.intrinsics.fx);
  w.f64(seq.intrinsics.fy);
  w.f64(seq.intrinsics.cx);
  w.f64(seq.intrinsics.cy);
  w.f64(seq.depth_max);
  for (double v : seq.extrinsics.cam_from_veh.matrix()) w.f64(v);
  w.u32(static_cast<uint32_t>(seq.frames.size()));
  for (const SceneFrame& fr : seq.frames) {
    w.f64(fr.odom.v);
    w.f64(fr.odom.yaw_rate);
    w.f64(fr.odom.dt);
    for (int y = 0; y < fr.semantics.h(); ++y)
      for (int x = 0; x < fr.semantics.w(); ++x) {
        int16_t c = fr.semantics.at(y, x);
        w.u16(c < 0 ? uint16_t{0xFFFF} : static_cast<uint16_t>(c));
      }
    for (int y = 0; y < fr.depth.h(); ++y)
      for (int x = 0; x < fr.depth.w(); ++x) w.f32(fr.depth.at(y, x));
    w.u32(static_cast<uint32_t>(fr.instances.size()));
    for (const InstanceMask& im : fr.instances) {
      w.u16(static_cast<uint16_t>(im.instance_id));
      w.u16(static_cast<uint16_t>(im.class_id));
      std::vector<uint32_t> runs = rle_encode(im.mask);
      w.u32(static_cast<uint32_t>(runs.size()));
      for (uint32_t r : runs) w.u32(r);
    }
  }
  w.u32(static_cast<uint32_t>(seq.step_cam.size()));
  for (const RigidTransform& t : seq.step_cam)
    for (double v : t.matrix()) w.f64(v);
  w.write_file(path);
}

inline SceneSequence load_sequence(const std::string& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.magic("PFD1", "sequence file");
  SceneSequence seq;
  seq.stuff_classes = r.u16();
  seq.thing_classes = r.u16();
  const int h = static_cast<int>(r.u32());
  const int w = static_cast<int>(r.u32());
  if (h < 1 || w < 1 || h > 1 << 16 || w > 1 << 16)
    throw FormatError(str("sequence file: bad frame size ", h, "x", w));
  seq.intrinsics.fx = r.f64();
  seq.intrinsics.fy = r.f64();
  seq.intrinsics.cx = r.f64();
  seq.intrinsics.cy = r.f64();
  seq.depth_max = r.f64();
  std::array<double, 16> ext{};
  for (double& v : ext) v = r.f64();
  seq.extrinsics.cam_from_veh = RigidTransform::from_array(ext);
  const uint32_t frame_count = r.u32();
  if (frame_count < 1) throw FormatError("sequence file: no frames");
  for (uint32_t k = 0; k < frame_count; ++k) {
    SceneFrame fr;
    fr.odom.v = r.f64();
    fr.odom.yaw_rate = r.f64();
    fr.odom.dt = r.f64();
    fr.semantics = SemanticMap(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        uint16_t c = r.u16();
        fr.semantics.at(y, x) = c == 0xFFFF ? kUnknownClass : static_cast<int16_t>(c);
      }
    fr.depth = DepthMap(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) fr.depth.at(y, x) = r.f32();
    const uint32_t inst_count = r.u32();
    for (uint32_t i = 0; i < inst_count; ++i) {
      InstanceMask im;
      im.instance_id = r.u16();
      im.class_id = r.u16();
      if (im.class_id >= seq.total_classes())
        throw FormatError(str("sequence file: instance class ", im.class_id,
                              " out of range (", seq.total_classes(), " classes)"));
      const uint32_t run_count = r.u32();
      std::vector<uint32_t> runs(run_count);
      for (uint32_t& rn : runs) rn = r.u32();
      im.mask = rle_decode(h, w, runs);
      fr.instances.push_back(std::move(im));
    }
    seq.frames.push_back(std::move(fr));
  }
  const uint32_t steps = r.u32();
  if (steps != frame_count - 1)
    throw FormatError(str("sequence file: ", steps, " step transforms for ", frame_count,
                          " frames"));
  for (uint32_t k = 0; k < steps; ++k) {
    std::array<double, 16> t{};
    for (double& v : t) v = r.f64();
    seq.step_cam.push_back(RigidTransform::from_array(t));
  }
  r.expect_end("sequence file");
  return seq;
}

}  // namespace panofc
