#pragma once

#include <vector>

#include "vnav/geom.hpp"
#include "vnav/ransac.hpp"

namespace vnav {

/// Plane {x : normal . x + offset = 0}; normal is unit length and oriented so
/// that offset >= 0, making offset the distance from the origin to the plane.
struct PlaneModel {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }
};

/// Least-squares plane through the given points (smallest principal axis).
/// Throws DegenerateInput for fewer than 3 points or collinear input.
PlaneModel fit_plane_lsq(const std::vector<Vec3>& points);

/// RANSAC plane fit followed by a least-squares refit to the inliers.
/// Throws DegenerateInput for < 3 points or when every sample is collinear.
PlaneModel fit_plane_ransac(const std::vector<Vec3>& points,
                            const RansacConfig& cfg = RansacConfig::plane_defaults());

}  // namespace vnav
