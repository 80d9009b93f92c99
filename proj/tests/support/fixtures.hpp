#pragma once

#include <cmath>
#include <memory>
#include <unordered_map>

#include "vnav/scene_graph.hpp"
#include "vnav/sim_world.hpp"

namespace vnav::fixture {

inline WorldSpec straight_spec(double length, double density = 1.0) {
  WorldSpec s;
  s.extent_min = {-10.0, -10.0};
  s.extent_max = {length + 10.0, 10.0};
  s.landmark_density = density;
  s.corridors.push_back({{{0.0, 0.0}, {length, 0.0}}, 3.0, false});
  return s;
}

/// Trajectory 0 runs along x; trajectory 1 shares its middle 10 m, then turns north.
inline WorldSpec two_trajectory_spec() {
  WorldSpec s;
  s.extent_min = {-10.0, -10.0};
  s.extent_max = {40.0, 30.0};
  s.corridors.push_back({{{0.0, 0.0}, {30.0, 0.0}}, 3.0, false});
  s.corridors.push_back({{{10.0, 0.0}, {20.0, 0.0}, {20.0, 20.0}}, 3.0, false});
  return s;
}

struct Scenario {
  std::shared_ptr<const World> world;
  std::vector<ExplorationLog> logs;
  std::shared_ptr<const SceneGraph> graph;
  Rig rig;
};

inline Scenario build(std::uint64_t seed, const WorldSpec& spec, GraphBuildOptions opts = {}) {
  Scenario s;
  s.world = std::make_shared<const World>(generate_world(seed, spec));
  for (std::size_t i = 0; i < spec.corridors.size(); ++i) {
    ExploreOptions eo;
    eo.trajectory_id = static_cast<std::uint32_t>(i);
    eo.observation_seed = seed * 131 + i;
    s.logs.push_back(record_exploration(*s.world, spec.corridors[i].waypoints, s.rig, eo));
  }
  opts.chunks.seed = seed;
  s.graph = std::make_shared<const SceneGraph>(build_graph(s.logs, *s.world, opts));
  return s;
}

/// Queries displaced sideways from each keyframe by `offset`, alternating
/// sides, with ids {1000 + trajectory, index}. Fills true positions of both
/// keyframes and queries.
inline std::vector<DescriptorIndex::Entry> side_queries(const World& w, const SceneGraph& g, double offset,
                                                        const NoiseConfig& noise, std::uint64_t seed,
                                                        std::unordered_map<FrameId, Vec2>& pos) {
  std::vector<DescriptorIndex::Entry> out;
  std::uint32_t n = 0;
  for (const auto& f : g.frames()) {
    const auto& kf = g.keyframe(f);
    pos[f] = kf.world_position_gt;
    const double yaw = kf.world_yaw_gt;
    const double side = (n++ % 2 == 0) ? 1.0 : -1.0;
    const Vec2 p = kf.world_position_gt + side * offset * Vec2(-std::sin(yaw), std::cos(yaw));
    const FrameId q{1000 + f.trajectory, f.index};
    const auto obs = observe(w, {Pose::planar(p.x(), p.y(), yaw), 0.0}, Rig{}, noise, seed + n);
    if (obs.empty()) continue;
    pos[q] = p;
    out.push_back({q, describe_frame(obs)});
  }
  return out;
}

inline Scenario straight(std::uint64_t seed, double length) { return build(seed, straight_spec(length)); }

}  // namespace vnav::fixture
