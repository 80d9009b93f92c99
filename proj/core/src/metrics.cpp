#include "vnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "vnav/sim_world.hpp"

namespace vnav {

double discrete_frechet(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = (a[i] - b[j]).norm();
      if (i == 0 && j == 0) {
        cur[j] = d;
      } else if (i == 0) {
        cur[j] = std::max(cur[j - 1], d);
      } else if (j == 0) {
        cur[j] = std::max(prev[j], d);
      } else {
        cur[j] = std::max(std::min({prev[j], prev[j - 1], cur[j - 1]}), d);
      }
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

std::vector<PlanarPose> resample_by_arc_length(const std::vector<PlanarPose>& path, double spacing) {
  std::vector<PlanarPose> out;
  if (path.empty() || !(spacing > 0.0)) return out;
  out.push_back(path.front());
  double carried = 0.0;  // arc length since the last emitted sample
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 a = path[i].position();
    const Vec2 b = path[i + 1].position();
    const double len = (b - a).norm();
    if (len <= 0.0) continue;
    double along = spacing - carried;
    while (along <= len + 1e-12) {
      const Vec2 p = a + (b - a) * (along / len);
      out.push_back({p.x(), p.y(), path[i].yaw});
      along += spacing;
    }
    carried = len - (along - spacing);
  }
  return out;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= double(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / double(v.size()));
}

}  // namespace

RunMetrics evaluate_trace(const RunTrace& trace) {
  RunMetrics m;
  m.goal_declared = trace.goal_declared;
  m.interventions = trace.interventions;
  m.intervention_actions = trace.intervention_actions;
  m.robot_actions = trace.robot_actions;
  m.elapsed_s = trace.elapsed_s;

  const Vec2 final_pos = trace.executed.empty() ? Vec2::Zero() : trace.executed.back().position();
  m.final_distance_to_goal = trace.executed.empty() ? std::numeric_limits<double>::infinity()
                                                    : (final_pos - trace.goal_position).norm();
  for (std::size_t i = 0; i < kSuccessThresholds.size(); ++i) {
    m.sr_hit[i] = trace.goal_declared && m.final_distance_to_goal <= kSuccessThresholds[i];
  }
  m.success = m.sr_hit[0];

  std::vector<Vec2> a, b;
  for (const auto& p : trace.executed) a.push_back(p.position());
  for (const auto& p : trace.reference) b.push_back(p.position());
  m.frechet_m = discrete_frechet(a, b);

  const auto ra = resample_by_arc_length(trace.executed, kStepMeters);
  const auto rb = resample_by_arc_length(trace.reference, kStepMeters);
  std::vector<double> rot, trans;
  for (std::size_t i = 0; i < std::min(ra.size(), rb.size()); ++i) {
    trans.push_back((ra[i].position() - rb[i].position()).norm());
    rot.push_back(std::abs(rad2deg(wrap_angle(ra[i].yaw - rb[i].yaw))));
  }
  mean_std(rot, m.rot_err_mean_deg, m.rot_err_std_deg);
  mean_std(trans, m.trans_err_mean_m, m.trans_err_std_m);
  return m;
}

std::string metrics_csv_header() {
  return "success,sr_1_5,sr_3,sr_7,sr_12,frechet_m,rot_err_mean_deg,rot_err_std_deg,trans_err_mean_m,"
         "trans_err_std_m,interventions,intervention_actions,robot_actions,elapsed_s";
}

std::string metrics_csv_row(const RunMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%zu,%zu,%.3f", m.success ? 1 : 0,
                m.sr_hit[0] ? 1 : 0, m.sr_hit[1] ? 1 : 0, m.sr_hit[2] ? 1 : 0, m.sr_hit[3] ? 1 : 0, m.frechet_m,
                m.rot_err_mean_deg, m.rot_err_std_deg, m.trans_err_mean_m, m.trans_err_std_m, m.interventions,
                m.intervention_actions, m.robot_actions, m.elapsed_s);
  return buf;
}

}  // namespace vnav
