#include "vnav/geom.hpp"

#include <cmath>
#include <numbers>

#include "vnav/error.hpp"

namespace vnav {

Pose Pose::from_matrix(const Mat4& m) {
  Pose p;
  p.rotation = Eigen::Quaterniond(Mat3(m.topLeftCorner<3, 3>())).normalized();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Pose Pose::planar(double x, double y, double yaw, double z) {
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  p.translation = Vec3(x, y, z);
  return p;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::inverse() const {
  Pose p;
  p.rotation = rotation.conjugate();
  p.translation = -(p.rotation * translation);
  return p;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0 || !(cx >= 0.0) || !(cx < width) ||
      !(cy >= 0.0) || !(cy < height)) {
    throw Error(ErrorCode::InvalidSpec, "camera intrinsics out of range");
  }
}

Pose compose(const Pose& a, const Pose& b) {
  Pose p;
  p.rotation = (a.rotation * b.rotation).normalized();
  p.translation = a.rotation * b.translation + a.translation;
  return p;
}

Pose relative(const Pose& current, const Pose& target) { return compose(current.inverse(), target); }

std::optional<PixelPoint> project_camera(const CameraModel& cam, const Vec3& p_cam) {
  if (!(p_cam.x() > 0.0)) return std::nullopt;
  return PixelPoint{cam.cx - cam.fx * p_cam.y() / p_cam.x(), cam.cy - cam.fy * p_cam.z() / p_cam.x()};
}

Vec3 backproject_camera(const CameraModel& cam, const PixelPoint& px, double depth) {
  return {depth, -(px.u - cam.cx) / cam.fx * depth, -(px.v - cam.cy) / cam.fy * depth};
}

std::optional<PixelPoint> project(const CameraModel& cam, const Pose& camera_pose, const WorldPoint& p) {
  const Vec3 pc = camera_pose.rotation.conjugate() * (p - camera_pose.translation);
  auto px = project_camera(cam, pc);
  if (!px || !cam.in_bounds(*px)) return std::nullopt;
  return px;
}

WorldPoint backproject(const CameraModel& cam, const Pose& camera_pose, const PixelPoint& px, double depth) {
  if (!(depth > 0.0)) throw Error(ErrorCode::InvalidDepth, "depth must be positive");
  return camera_pose.apply(backproject_camera(cam, px, depth));
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

double yaw_of(const Pose& p) {
  const Vec3 fwd = p.rotation * Vec3::UnitX();
  const double horiz = std::hypot(fwd.x(), fwd.y());
  if (horiz < 1e-6) throw Error(ErrorCode::DegenerateYaw, "forward axis is vertical");
  double yaw = std::atan2(fwd.y(), fwd.x());
  if (yaw <= -std::numbers::pi) yaw = std::numbers::pi;
  return yaw;
}

double rotation_angle(const Pose& p) {
  const Eigen::Quaterniond q = p.rotation.normalized();
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond exp_so3(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Eigen::Quaterniond(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, w / theta));
}

}  // namespace vnav
