#pragma once

#include <array>
#include <vector>

#include "vnav/geom.hpp"

namespace vnav {

/// Planar pose sample (x, y, yaw).
struct PlanarPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
};

/// Discrete Fréchet distance between two polylines (Euclidean point metric).
/// Zero when both are empty; +inf when exactly one is empty.
double discrete_frechet(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

/// Samples a pose polyline every `spacing` meters of arc length, starting at
/// the first vertex. Yaw is carried from the vertex that starts the segment.
std::vector<PlanarPose> resample_by_arc_length(const std::vector<PlanarPose>& path, double spacing);

inline constexpr std::array<double, 4> kSuccessThresholds{1.5, 3.0, 7.0, 12.0};

/// Everything needed to score one run, on-line or from a run log.
struct RunTrace {
  std::vector<PlanarPose> executed;   // agent pose after every action, start included
  std::vector<PlanarPose> reference;  // ground-truth poses of the taught path
  Vec2 goal_position = Vec2::Zero();
  bool goal_declared = false;
  std::size_t interventions = 0;
  std::size_t intervention_actions = 0;
  std::size_t robot_actions = 0;
  double elapsed_s = 0.0;
};

struct RunMetrics {
  bool success = false;
  bool goal_declared = false;
  double final_distance_to_goal = 0.0;
  std::array<bool, 4> sr_hit{};  // per kSuccessThresholds
  double frechet_m = 0.0;
  double rot_err_mean_deg = 0.0;
  double rot_err_std_deg = 0.0;
  double trans_err_mean_m = 0.0;
  double trans_err_std_m = 0.0;
  std::size_t interventions = 0;
  std::size_t intervention_actions = 0;
  std::size_t robot_actions = 0;
  double elapsed_s = 0.0;
};

/// sr_hit[i] = goal declared and final distance <= kSuccessThresholds[i];
/// success = sr_hit[0]. Per-step errors pair both paths index by index after
/// resampling at 0.25 m.
RunMetrics evaluate_trace(const RunTrace& trace);

/// Fixed CSV layout for metrics.
std::string metrics_csv_header();
std::string metrics_csv_row(const RunMetrics& m);

}  // namespace vnav
