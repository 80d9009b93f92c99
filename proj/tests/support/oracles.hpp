#pragma once

// Independent reference implementations used as test oracles. They are
// written for clarity, not speed, and share no code with the library beyond
// its plain data types.

#include <optional>
#include <unordered_map>
#include <vector>

#include "vnav/geom.hpp"
#include "vnav/metrics.hpp"
#include "vnav/place_index.hpp"
#include "vnav/pnp.hpp"
#include "vnav/scene_graph.hpp"
#include "vnav/sim_world.hpp"

namespace vnav::oracle {

/// 4x4 homogeneous matrix built from the quaternion formula.
Mat4 homogeneous(const Pose& p);
/// Pose distance: translation norm and rotation angle of a^-1 b.
double translation_gap(const Pose& a, const Pose& b);
double rotation_gap(const Pose& a, const Pose& b);
/// Yaw from the rotation matrix via atan2 of the rotated x axis.
double yaw_from_matrix(const Pose& p);

/// Textbook recursion c(i, j) = max(d(i, j), min(c(i-1, j), c(i-1, j-1), c(i, j-1))), memoized top-down.
double frechet(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

struct BestPath {
  double cost = 0.0;
  std::vector<FrameId> frames;
};
/// Enumerates every simple path; minimum cost, then lexicographically
/// smallest frame sequence. Nullopt when disconnected.
std::optional<BestPath> enumerate_paths(const SceneGraph& g, const FrameId& start, const FrameId& goal);

/// Full sort of every entry by (similarity desc, frame asc).
std::vector<FrameId> linear_scan(const std::vector<DescriptorIndex::Entry>& entries, const GlobalDescriptor& q,
                                 std::size_t k);

/// Recall protocol written from its definition.
std::map<std::size_t, double> recall(const std::vector<DescriptorIndex::Entry>& db,
                                     const std::vector<DescriptorIndex::Entry>& queries,
                                     const std::unordered_map<FrameId, Vec2>& positions, double same_place,
                                     double db_radius, double band, const std::vector<std::size_t>& ks,
                                     std::size_t* kept = nullptr);

struct PnPScene {
  Pose truth;  // camera -> model
  std::vector<Correspondence2D3D> corrs;
  std::vector<bool> is_outlier;
};
/// Points spread 2..12 m in front of a random camera; outliers get a
/// uniform random pixel.
PnPScene pnp_scene(std::uint64_t seed, std::size_t n, double pixel_sigma, double outlier_fraction,
                   const CameraModel& cam = {});

/// Landmarks a noise-free camera can see, by direct per-landmark test.
std::vector<std::size_t> visible_landmarks(const World& world, const AgentState& agent, const Rig& rig);

/// Ground points per the sampling rules, recomputed from the keyframe.
std::vector<Vec3> ground_points(const Keyframe& kf, const CameraModel& cam, double region_fraction,
                                std::size_t subsample, double percentile);

/// Path frame whose ground-truth position is closest to p.
std::size_t nearest_path_frame(const SceneGraph& g, const std::vector<FrameId>& path, const Vec2& p);

}  // namespace vnav::oracle
