#include "vnav/scale_est.hpp"

#include <algorithm>
#include <cmath>

#include "vnav/error.hpp"
#include "vnav/rng.hpp"

namespace vnav {

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::DegenerateInput, "median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<Vec3> collect_ground_points(const Keyframe& keyframe, const CameraModel& cam,
                                        const GroundSampling& sampling) {
  const double v_min = cam.height * (1.0 - sampling.region_fraction);
  std::vector<const Detection*> picked;
  if (sampling.region_fraction > 0.0) {
    for (const auto& d : keyframe.observation.detections) {
      if (d.is_ground && d.pixel.v >= v_min && d.depth > 0.0) picked.push_back(&d);
    }
  }
  if (picked.empty()) throw Error(ErrorCode::NoGroundVisible, "no ground detections in the lower image region");

  if (sampling.subsample > 0 && picked.size() > sampling.subsample) {
    std::vector<const Detection*> sub;
    sub.reserve(sampling.subsample);
    const double stride = double(picked.size()) / double(sampling.subsample);
    for (std::size_t i = 0; i < sampling.subsample; ++i) {
      sub.push_back(picked[static_cast<std::size_t>(std::floor(i * stride))]);
    }
    picked = std::move(sub);
  }

  std::vector<double> depths;
  depths.reserve(picked.size());
  for (const auto* d : picked) depths.push_back(d->depth);
  std::sort(depths.begin(), depths.end());
  // Nearest-rank percentile.
  const double rank = std::ceil(sampling.depth_percentile / 100.0 * double(depths.size()));
  const std::size_t idx = static_cast<std::size_t>(std::clamp(rank, 1.0, double(depths.size()))) - 1;
  const double cutoff = depths[idx];

  std::vector<Vec3> points;
  for (const auto* d : picked) {
    if (d->depth <= cutoff) points.push_back(backproject_camera(cam, d->pixel, d->depth));
  }
  return points;
}

ScaleEstimate estimate_scale(const ChunkNode& chunk, const CameraModel& cam, double camera_height,
                             const RansacConfig& plane_cfg, const GroundSampling& sampling) {
  ScaleEstimate est;
  for (std::size_t k = 0; k < chunk.keyframes.size(); ++k) {
    std::vector<Vec3> pts;
    try {
      pts = collect_ground_points(chunk.keyframes[k], cam, sampling);
    } catch (const Error&) {
      continue;
    }
    if (pts.size() < 3) continue;
    RansacConfig cfg = plane_cfg;
    cfg.seed = derive_seed(plane_cfg.seed, (std::uint64_t(chunk.chunk_id) << 20) + k);
    if (!est.per_keyframe_offsets.empty()) {
      const double running = median(est.per_keyframe_offsets);
      if (running > 1.0) cfg.inlier_threshold *= running;
    }
    PlaneModel plane;
    try {
      plane = fit_plane_ransac(pts, cfg);
    } catch (const Error&) {
      continue;
    }
    std::size_t inliers = 0;
    for (const auto& p : pts) inliers += std::abs(plane.signed_distance(p)) <= cfg.inlier_threshold;
    est.per_keyframe_offsets.push_back(plane.offset);
    est.inlier_fractions.push_back(double(inliers) / double(pts.size()));
    est.keyframes_used.push_back(k);
  }
  if (est.per_keyframe_offsets.empty()) {
    throw Error(ErrorCode::ScaleUnavailable, "no keyframe of chunk " + std::to_string(chunk.chunk_id) + " yields ground");
  }
  const double m = median(est.per_keyframe_offsets);
  if (!(m > 0.0)) throw Error(ErrorCode::ScaleUnavailable, "median plane offset is zero");
  est.scale = camera_height / m;
  return est;
}

ScaleEstimate estimate_scale_or_fallback(const ChunkNode& chunk, const CameraModel& cam, double camera_height,
                                         const RansacConfig& plane_cfg, const GroundSampling& sampling) {
  try {
    return estimate_scale(chunk, cam, camera_height, plane_cfg, sampling);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ScaleUnavailable) throw;
    ScaleEstimate est;
    est.fallback = true;
    return est;
  }
}

}  // namespace vnav
