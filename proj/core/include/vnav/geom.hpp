#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

// Conventions used throughout vnav:
//  * World frame is right-handed with z up; the ground plane is z = 0.
//  * Body and camera frames share the robot convention: x forward, y left,
//    z up. A pixel's depth is therefore the x coordinate in the camera frame.
//  * Quaternions are stored scalar-last (x, y, z, w), matching Eigen's
//    coefficient order.
//  * Angles are wrapped to (-pi, pi].

namespace vnav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid transform mapping points from a local frame into its parent frame:
/// p_parent = rotation * p_local + translation.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  /// Level pose at (x, y, z) with heading yaw about world z.
  static Pose planar(double x, double y, double yaw, double z = 0.0);

  Mat4 matrix() const;
  Pose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

using WorldPoint = Vec3;

struct CameraModel {
  double fx = 320.0;
  double fy = 320.0;
  double cx = 224.0;
  double cy = 168.0;
  int width = 448;
  int height = 336;

  /// Throws InvalidSpec when the intrinsics violate fx,fy > 0 or the
  /// principal point lies outside the image.
  void validate() const;
  bool in_bounds(const PixelPoint& px) const {
    return px.u >= 0.0 && px.u < width && px.v >= 0.0 && px.v < height;
  }
};

/// Result maps a point through b, then a.
Pose compose(const Pose& a, const Pose& b);
/// Transform from current to target, so compose(current, relative) == target.
Pose relative(const Pose& current, const Pose& target);

/// Camera-frame point to pixel with no visibility checks; nullopt when the
/// point is not strictly in front of the camera.
std::optional<PixelPoint> project_camera(const CameraModel& cam, const Vec3& p_cam);
/// Camera-frame point for a pixel at the given depth (depth = forward axis).
Vec3 backproject_camera(const CameraModel& cam, const PixelPoint& px, double depth);

/// Nullopt when behind the camera or outside the image.
std::optional<PixelPoint> project(const CameraModel& cam, const Pose& camera_pose, const WorldPoint& p);
/// Throws InvalidDepth for depth <= 0.
WorldPoint backproject(const CameraModel& cam, const Pose& camera_pose, const PixelPoint& px,
                       double depth);

/// Heading of the forward axis about world z, in (-pi, pi].
/// Throws DegenerateYaw when the forward axis is vertical within 1e-6.
double yaw_of(const Pose& p);

double wrap_angle(double a);
double deg2rad(double d);
double rad2deg(double r);

/// Rotation angle of a pose's rotation part, radians in [0, pi].
double rotation_angle(const Pose& p);

Mat3 skew(const Vec3& v);
/// Rotation vector to quaternion (exponential map).
Eigen::Quaterniond exp_so3(const Vec3& w);

}  // namespace vnav
