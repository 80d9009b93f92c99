#pragma once

#include <vector>

#include "vnav/plane.hpp"
#include "vnav/scene_graph.hpp"

namespace vnav {

inline constexpr double kCameraHeightMeters = 0.250;

struct GroundSampling {
  double region_fraction = 0.30;  // lower part of the image searched for ground
  std::size_t subsample = 20000;
  double depth_percentile = 50.0; // keep the nearest part of the depths
};

/// Meters-per-chunk-unit factor recovered from the ground plane.
struct ScaleEstimate {
  double scale = 1.0;
  std::vector<double> per_keyframe_offsets;   // chunk units
  std::vector<double> inlier_fractions;       // one per contributing keyframe
  std::vector<std::size_t> keyframes_used;    // indices into chunk.keyframes
  bool fallback = false;                      // true when no keyframe saw ground
};

/// Ground-flagged detections in the lower region_fraction of the image,
/// evenly subsampled, restricted to depths at or below the given percentile,
/// and back-projected into the camera frame (chunk units).
/// Throws NoGroundVisible when nothing survives.
std::vector<Vec3> collect_ground_points(const Keyframe& keyframe, const CameraModel& cam,
                                        const GroundSampling& sampling = {});

/// Median of the values; the mean of the middle pair for even counts.
double median(std::vector<double> values);

/// Plane fit per keyframe; offset = distance of the camera center to the
/// plane; scale = camera_height / median(offsets). The plane threshold is in
/// chunk units and grows with the running median offset once it exceeds 1.
/// Throws ScaleUnavailable when no keyframe yields a plane.
ScaleEstimate estimate_scale(const ChunkNode& chunk, const CameraModel& cam,
                             double camera_height = kCameraHeightMeters,
                             const RansacConfig& plane_cfg = RansacConfig::plane_defaults(),
                             const GroundSampling& sampling = {});

/// As estimate_scale, but on failure returns scale 1.0 flagged as fallback.
ScaleEstimate estimate_scale_or_fallback(const ChunkNode& chunk, const CameraModel& cam,
                                         double camera_height = kCameraHeightMeters,
                                         const RansacConfig& plane_cfg = RansacConfig::plane_defaults(),
                                         const GroundSampling& sampling = {});

}  // namespace vnav
