#pragma once

// Camera and world geometry.
//
// Axis convention (shared by every frame):
//   x right, y down, z forward.
// For a camera this is the usual optical frame. The world frame uses the same
// handedness with y pointing down (gravity), so the horizontal plane is x-z
// everywhere and "yaw" is a rotation about +y.
//
// A facing direction R is a unit 2-vector (R[0], R[1]) holding the x and z
// components of a horizontal direction. Ego rotations act on R through their
// yaw (twist about y) only; pitch and roll are ignored for R.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "geoloc/error.hpp"

namespace geoloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double px = 800.0;
  double py = 450.0;
  int width = 1600;
  int height = 900;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorKind::InvariantViolation, "focal lengths must be positive");
    if (width <= 0 || height <= 0) fail(ErrorKind::InvariantViolation, "image size must be positive");
    if (!(px >= 0.0 && px <= width && py >= 0.0 && py <= height))
      fail(ErrorKind::InvariantViolation, "principal point outside image");
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Camera pose in the world: x_world = rotation * x_camera + translation.
struct EgoPose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static EgoPose from_yaw(double yaw, const Vec3& t) {
    return {Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitY())), t};
  }

  /// Rotation angle about +y of the swing-twist decomposition.
  double yaw() const { return 2.0 * std::atan2(rotation.y(), rotation.w()); }

  Mat3 matrix() const { return rotation.toRotationMatrix(); }

  friend bool operator==(const EgoPose& a, const EgoPose& b) {
    return a.rotation.coeffs() == b.rotation.coeffs() && a.translation == b.translation;
  }
};

enum class FrameKind { Camera, Reference, World };

constexpr std::string_view to_string(FrameKind f) {
  switch (f) {
    case FrameKind::Camera: return "camera";
    case FrameKind::Reference: return "reference";
    case FrameKind::World: return "world";
  }
  return "camera";
}

inline FrameKind frame_from_string(std::string_view s) {
  if (s == "camera") return FrameKind::Camera;
  if (s == "reference") return FrameKind::Reference;
  if (s == "world") return FrameKind::World;
  fail(ErrorKind::Schema, "unknown frame '" + std::string(s) + "'");
}

struct Pose5D {
  Vec3 T = Vec3::Zero();
  Vec2 R = Vec2(0.0, 1.0);
  FrameKind frame = FrameKind::Camera;

  friend bool operator==(const Pose5D&, const Pose5D&) = default;
};

/// Pose-head style observation: pixel center, depth along the optical axis,
/// and a camera-frame facing direction.
struct PixelObservation {
  Vec2 center = Vec2::Zero();
  double depth = 1.0;
  Vec2 R = Vec2(0.0, -1.0);

  friend bool operator==(const PixelObservation&, const PixelObservation&) = default;
};

inline Vec2 normalize_rotation(const Vec2& r) {
  const double n = r.norm();
  if (!(n > 1e-12)) fail(ErrorKind::ZeroVector, "cannot normalize a zero rotation vector");
  return r / n;
}

inline Vec3 recover_translation(const Vec2& center, double depth, const CameraIntrinsics& K) {
  if (!(depth > 0.0)) fail(ErrorKind::NonPositiveDepth, "depth must be positive, got " + std::to_string(depth));
  return {(center.x() - K.px) * depth / K.fx, (center.y() - K.py) * depth / K.fy, depth};
}

inline Vec3 recover_translation(const PixelObservation& obs, const CameraIntrinsics& K) {
  return recover_translation(obs.center, obs.depth, K);
}

inline Vec2 project(const Vec3& T, const CameraIntrinsics& K) {
  if (!(T.z() > 0.0)) fail(ErrorKind::NonPositiveDepth, "point behind the camera");
  return {K.px + K.fx * T.x() / T.z(), K.py + K.fy * T.y() / T.z()};
}

/// Rotates a horizontal (x, z) direction by `yaw` about +y.
inline Vec2 rotate_horizontal(const Vec2& r, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * r[0] + s * r[1], -s * r[0] + c * r[1]};
}

inline Pose5D camera_to_world(const Pose5D& pose_c, const EgoPose& ego) {
  return {ego.rotation * pose_c.T + ego.translation,
          normalize_rotation(rotate_horizontal(pose_c.R, ego.yaw())), FrameKind::World};
}

inline Pose5D world_to_camera(const Pose5D& pose_w, const EgoPose& ego) {
  return {ego.rotation.conjugate() * (pose_w.T - ego.translation),
          normalize_rotation(rotate_horizontal(pose_w.R, -ego.yaw())), FrameKind::Camera};
}

/// Direct map from camera(t) coordinates into the reference camera.
struct RelativeTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double yaw = 0.0;

  static RelativeTransform between(const EgoPose& ego_t, const EgoPose& ego_ref) {
    const Mat3 ref_t = ego_ref.matrix().transpose();
    return {ref_t * ego_t.matrix(), ref_t * (ego_t.translation - ego_ref.translation),
            ego_t.yaw() - ego_ref.yaw()};
  }

  Pose5D apply(const Pose5D& pose_t) const {
    return {rotation * pose_t.T + translation, normalize_rotation(rotate_horizontal(pose_t.R, yaw)),
            FrameKind::Reference};
  }
};

inline Pose5D to_reference_frame(const Pose5D& pose_t, const EgoPose& ego_t, const EgoPose& ego_ref) {
  Pose5D out = world_to_camera(camera_to_world(pose_t, ego_t), ego_ref);
  out.frame = FrameKind::Reference;
  return out;
}

/// Reference-frame pose back to the world through the reference ego.
inline Pose5D reference_to_world(const Pose5D& pose_ref, const EgoPose& ego_ref) {
  return camera_to_world(pose_ref, ego_ref);
}

/// Angle between two unit directions in degrees, in [0, 180].
/// atan2(|cross|, dot) equals arccos(dot) for unit inputs and stays accurate near 0.
inline double angular_error(const Vec2& r, const Vec2& r_hat) {
  const double dot = std::clamp(r.dot(r_hat), -1.0, 1.0);
  const double cross = r[0] * r_hat[1] - r[1] * r_hat[0];
  return std::atan2(std::abs(cross), dot) * 180.0 / std::numbers::pi;
}

}  // namespace geoloc
