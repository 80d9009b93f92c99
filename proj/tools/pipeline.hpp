#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vnav/nav_service.hpp"
#include "vnav/scene_graph.hpp"
#include "vnav/serialization.hpp"

namespace vnav::pipeline {

struct TrajectorySpec {
  std::uint32_t id = 0;
  std::vector<Vec2> waypoints;
  std::optional<double> initial_yaw;
  bool spin_at_junctions = false;
};

struct RecallOptions {
  RecallProtocol protocol;
  double query_offset = 0.6;  // lateral displacement of each query from its teach frame
  NoiseConfig query_noise = NoiseConfig::none();
};

/// One file drives every stage; each section is optional.
struct PipelineConfig {
  WorldSpec world;
  std::vector<TrajectorySpec> trajectories;  // defaults to one per corridor
  NoiseConfig explore_noise = NoiseConfig::none();
  GraphBuildOptions graph;
  RecallOptions recall;
  RunConfig run;
  std::string start = "auto";
  std::optional<std::string> goal;
  std::optional<Vec2> start_position;  // for automatic starts
  std::optional<double> start_yaw;
};

/// Throws InvalidSpec for unknown keys and LoadFailed for unreadable files.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const json& j);

const TrajectorySpec& trajectory(const PipelineConfig& cfg, std::uint32_t id);

std::uint64_t explore_seed(std::uint64_t seed, std::uint32_t trajectory_id);
ExplorationLog explore(const World& world, const TrajectorySpec& t, const Rig& rig, const NoiseConfig& noise,
                       std::uint64_t seed);

/// Query frames displaced sideways from every keyframe, alternating sides.
std::vector<DescriptorIndex::Entry> recall_queries(const World& world, const SceneGraph& graph, const Rig& rig,
                                                   const RecallOptions& opts, std::uint64_t seed,
                                                   std::unordered_map<FrameId, Vec2>* positions);

/// Query trajectory ids are offset so they never collide with teach ids.
inline constexpr std::uint32_t kQueryTrajectoryBase = 1u << 20;

}  // namespace vnav::pipeline
