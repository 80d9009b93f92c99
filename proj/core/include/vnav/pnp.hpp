#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vnav/geom.hpp"
#include "vnav/ransac.hpp"

namespace vnav {

struct Correspondence2D3D {
  PixelPoint pixel;
  WorldPoint point;
  std::int64_t source_landmark_id = -1;  // bookkeeping for tests
};

/// Camera pose expressed in the model frame (camera -> model).
struct PnPResult {
  Pose pose;
  std::vector<std::size_t> inlier_ids;
  double mean_reprojection_error = 0.0;
};

inline constexpr std::size_t kPnPMinimalSample = 6;

/// Linear pose from >= 6 non-coplanar correspondences (normalized DLT,
/// rotation projected onto SO(3)). Nullopt on degenerate configurations.
std::optional<Pose> solve_pnp_dlt(const std::vector<Correspondence2D3D>& corrs, const CameraModel& cam);

/// Pixel distance between the observed and reprojected point; +inf when the
/// point falls behind the camera.
double reprojection_error(const Pose& camera_pose, const Correspondence2D3D& c, const CameraModel& cam);
/// Sum of squared reprojection errors.
double reprojection_cost(const Pose& camera_pose, const std::vector<Correspondence2D3D>& corrs,
                         const CameraModel& cam);

struct RefineOptions {
  int max_iters = 20;
  double tol = 1e-8;  // stop once the update step norm falls below this
};

/// Gauss-Newton on the reprojection error. Rotation is updated by a
/// left-multiplied exponential of a 3-vector; steps that would raise the
/// cost are halved until they do not, so the cost never increases.
///
/// Throws InsufficientData for fewer than 6 correspondences and
/// RefinementFailed when the normal equations are singular or the initial
/// pose does not reproject every point.
Pose refine_pose_gn(const Pose& initial, const std::vector<Correspondence2D3D>& inliers,
                    const CameraModel& cam, RefineOptions opts = {});

/// RANSAC over 6-point linear solves, Gauss-Newton on the consensus set.
/// Throws InsufficientData (< 6 correspondences) or NoConsensus.
PnPResult solve_pnp_ransac(const std::vector<Correspondence2D3D>& corrs, const CameraModel& cam,
                           const RansacConfig& cfg = RansacConfig::pnp_defaults());

}  // namespace vnav
