#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "panofc/common.hpp"

namespace panofc {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return {x / n, y / n, z / n};
  }
};

// Pinhole camera: z forward, x right, y down.
struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  bool operator==(const Intrinsics&) const = default;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw ConfigError(str("intrinsics: focal lengths must be positive, got fx=", fx,
                            " fy=", fy));
  }
};

// Camera-frame point from pixel (u, v) at the given z-depth.
inline Vec3 backproject(const Intrinsics& k, double u, double v, double depth) {
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

// Pixel coordinates of a camera-frame point; false when the point is at
// or behind the image plane (z <= 0).
inline bool project(const Intrinsics& k, const Vec3& p, double& u, double& v) {
  if (!(p.z > 0.0)) return false;
  u = k.fx * p.x / p.z + k.cx;
  v = k.fy * p.y / p.z + k.cy;
  return true;
}

// 4x4 homogeneous rigid transform.  The bottom row is exactly
// [0,0,0,1]; the rotation block stays orthonormal within 1e-9 and is
// re-projected onto the nearest rotation when composition drifts past
// that tolerance.
class RigidTransform {
 public:
  static constexpr double kDriftTolerance = 1e-9;

  RigidTransform() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}

  static RigidTransform from_array(const std::array<double, 16>& m) {
    RigidTransform t(m, unchecked_t{});
    if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0)
      throw InputError("rigid transform: bottom row must be [0,0,0,1]");
    for (double v : m)
      if (!std::isfinite(v)) throw InputError("rigid transform: non-finite entry");
    if (t.rotation_drift() > kDriftTolerance)
      throw InputError(str("rigid transform: rotation block not orthonormal (drift ",
                           t.rotation_drift(), ")"));
    if (t.rotation_det() <= 0.0)
      throw InputError("rigid transform: rotation block has non-positive determinant");
    return t;
  }

  double at(int r, int c) const { return m_[static_cast<size_t>(r) * 4 + c]; }
  const std::array<double, 16>& matrix() const { return m_; }

  bool operator==(const RigidTransform& o) const { return m_ == o.m_; }

  Vec3 apply(const Vec3& p) const {
    return {m_[0] * p.x + m_[1] * p.y + m_[2] * p.z + m_[3],
            m_[4] * p.x + m_[5] * p.y + m_[6] * p.z + m_[7],
            m_[8] * p.x + m_[9] * p.y + m_[10] * p.z + m_[11]};
  }

  Vec3 rotate(const Vec3& p) const {
    return {m_[0] * p.x + m_[1] * p.y + m_[2] * p.z,
            m_[4] * p.x + m_[5] * p.y + m_[6] * p.z,
            m_[8] * p.x + m_[9] * p.y + m_[10] * p.z};
  }

  Vec3 translation() const { return {m_[3], m_[7], m_[11]}; }

  // Rigid inverse: R' = R^T, t' = -R^T t.
  RigidTransform inverse() const {
    std::array<double, 16> r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r[static_cast<size_t>(i) * 4 + j] = m_[static_cast<size_t>(j) * 4 + i];
    for (int i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 3; ++j)
        acc += m_[static_cast<size_t>(j) * 4 + i] * m_[static_cast<size_t>(j) * 4 + 3];
      r[static_cast<size_t>(i) * 4 + 3] = -acc;
    }
    r[15] = 1.0;
    return RigidTransform(r, unchecked_t{});
  }

  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    std::array<double, 16> r{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += a.m_[static_cast<size_t>(i) * 4 + k] * b.m_[static_cast<size_t>(k) * 4 + j];
        r[static_cast<size_t>(i) * 4 + j] = acc;
      }
    r[12] = r[13] = r[14] = 0.0;
    r[15] = 1.0;
    RigidTransform out(r, unchecked_t{});
    if (out.rotation_drift() > kDriftTolerance) out.reorthonormalize();
    return out;
  }

  // Max-norm of R^T R - I over the rotation block.
  double rotation_drift() const {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k)
          acc += m_[static_cast<size_t>(k) * 4 + i] * m_[static_cast<size_t>(k) * 4 + j];
        worst = std::max(worst, std::fabs(acc - (i == j ? 1.0 : 0.0)));
      }
    return worst;
  }

  double rotation_det() const {
    return m_[0] * (m_[5] * m_[10] - m_[6] * m_[9]) -
           m_[1] * (m_[4] * m_[10] - m_[6] * m_[8]) +
           m_[2] * (m_[4] * m_[9] - m_[5] * m_[8]);
  }

  struct unchecked_t {};
  RigidTransform(const std::array<double, 16>& m, unchecked_t) : m_(m) {}

 private:
  // Polar projection via the Newton iteration R <- (R + R^{-T}) / 2.
  void reorthonormalize() {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r[static_cast<size_t>(i) * 3 + j] = m_[static_cast<size_t>(i) * 4 + j];
    for (int iter = 0; iter < 30; ++iter) {
      double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                   r[2] * (r[3] * r[7] - r[4] * r[6]);
      if (!(std::fabs(det) > 0.0))
        throw InputError("rigid transform: degenerate rotation block");
      // inverse-transpose via the adjugate: (R^{-1})^T = adj(R)^T / det
      std::array<double, 9> it{};
      it[0] = (r[4] * r[8] - r[5] * r[7]) / det;
      it[1] = -(r[3] * r[8] - r[5] * r[6]) / det;
      it[2] = (r[3] * r[7] - r[4] * r[6]) / det;
      it[3] = -(r[1] * r[8] - r[2] * r[7]) / det;
      it[4] = (r[0] * r[8] - r[2] * r[6]) / det;
      it[5] = -(r[0] * r[7] - r[1] * r[6]) / det;
      it[6] = (r[1] * r[5] - r[2] * r[4]) / det;
      it[7] = -(r[0] * r[5] - r[2] * r[3]) / det;
      it[8] = (r[0] * r[4] - r[1] * r[3]) / det;
      double delta = 0.0;
      for (int i = 0; i < 9; ++i) {
        double next = 0.5 * (r[static_cast<size_t>(i)] + it[static_cast<size_t>(i)]);
        delta = std::max(delta, std::fabs(next - r[static_cast<size_t>(i)]));
        r[static_cast<size_t>(i)] = next;
      }
      if (delta < 1e-14) break;
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        m_[static_cast<size_t>(i) * 4 + j] = r[static_cast<size_t>(i) * 3 + j];
    if (rotation_det() <= 0.0)
      throw InputError("rigid transform: orthonormalization produced a reflection");
  }

  std::array<double, 16> m_;
};

// Per-frame odometry reading: speed, yaw-rate and the interval to the
// next frame.
struct Odometry {
  double v = 0.0;        // m/s, along the vehicle x-axis (front)
  double yaw_rate = 0.0; // rad/s, positive turns toward +y (left)
  double dt = 0.0;       // s, must be > 0

  bool operator==(const Odometry&) const = default;

  void validate() const {
    if (!std::isfinite(v) || !std::isfinite(yaw_rate) || !std::isfinite(dt) || dt <= 0.0)
      throw InputError(str("odometry: invalid reading v=", v, " yaw_rate=", yaw_rate,
                           " dt=", dt));
  }
};

// Vehicle -> camera transform.
struct Extrinsics {
  RigidTransform cam_from_veh;

  bool operator==(const Extrinsics&) const = default;
};

struct PlanarPose {
  double x = 0.0, y = 0.0, theta = 0.0;
};

// Velocity motion model over one frame interval.  Vehicle frame:
// x front, y left, z up.  Near zero yaw the circular formula collapses
// to the straight-line limit.
inline PlanarPose step_pose(const Odometry& o) {
  o.validate();
  const double theta = o.yaw_rate * o.dt;
  if (std::fabs(theta) < 1e-8) return {o.v * o.dt, 0.0, theta};
  const double r = o.v / o.yaw_rate;
  return {r * std::sin(theta), r - r * std::cos(theta), theta};
}

// Planar pose as a rigid transform: rotation about z by theta plus
// translation (x, y, 0).
// Applies displacement b after a, both expressed in their own local frames.
inline PlanarPose compose(const PlanarPose& a, const PlanarPose& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

inline RigidTransform vehicle_transform(double x, double y, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return RigidTransform({c, -s, 0, x, s, c, 0, y, 0, 0, 1, 0, 0, 0, 0, 1},
                        RigidTransform::unchecked_t{});
}

inline RigidTransform vehicle_transform(const PlanarPose& p) {
  return vehicle_transform(p.x, p.y, p.theta);
}

// Camera-frame transform carrying frame-t coordinates into frame t+1:
// E * H_veh^{-1} * E^{-1} with E the vehicle->camera extrinsics.
inline RigidTransform camera_step(const Odometry& o, const Extrinsics& ext) {
  const RigidTransform h = vehicle_transform(step_pose(o));
  return ext.cam_from_veh * h.inverse() * ext.cam_from_veh.inverse();
}

// Ordered product that applies the first element first:
// chain([H0, H1, ..., Hn]) = Hn * ... * H1 * H0.
inline RigidTransform chain(std::span<const RigidTransform> transforms) {
  if (transforms.empty()) throw UsageError("chain: empty transform list");
  RigidTransform acc = transforms[0];
  for (size_t i = 1; i < transforms.size(); ++i) acc = transforms[i] * acc;
  return acc;
}

inline RigidTransform chain(const std::vector<RigidTransform>& transforms) {
  return chain(std::span<const RigidTransform>(transforms));
}

}  // namespace panofc
