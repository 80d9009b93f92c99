#include "pipeline.hpp"

#include <cmath>

#include "vnav/error.hpp"
#include "vnav/rng.hpp"

namespace vnav::pipeline {
namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw Error(ErrorCode::InvalidSpec, "unknown key '" + k + "' in " + where);
  }
}

Vec2 vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidSpec, "expected [x, y], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

PipelineConfig parse_config(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "config must be a JSON object");
  reject_unknown(j, {"world", "trajectories", "explore", "graph", "recall", "run", "route"}, "config");
  PipelineConfig cfg;
  try {
    if (j.contains("world")) j["world"].get_to(cfg.world);
    if (j.contains("trajectories")) {
      for (const auto& t : j["trajectories"]) {
        reject_unknown(t, {"id", "waypoints", "initial_yaw_deg", "spin_at_junctions"}, "trajectory");
        TrajectorySpec s;
        s.id = t.at("id").get<std::uint32_t>();
        for (const auto& w : t.at("waypoints")) s.waypoints.push_back(vec2(w));
        if (t.contains("initial_yaw_deg")) s.initial_yaw = t["initial_yaw_deg"].get<double>() * M_PI / 180.0;
        s.spin_at_junctions = t.value("spin_at_junctions", false);
        cfg.trajectories.push_back(std::move(s));
      }
    } else {
      for (std::size_t i = 0; i < cfg.world.corridors.size(); ++i) {
        const auto& c = cfg.world.corridors[i];
        cfg.trajectories.push_back({static_cast<std::uint32_t>(i), c.waypoints, std::nullopt, c.spin_at_junctions});
      }
    }
    if (j.contains("explore")) {
      reject_unknown(j["explore"], {"observation_noise"}, "explore");
      if (j["explore"].contains("observation_noise")) j["explore"]["observation_noise"].get_to(cfg.explore_noise);
    }
    if (j.contains("graph")) {
      const auto& g = j["graph"];
      reject_unknown(g, {"chunk_size", "knn", "corr_threshold", "cross_edge_weight", "max_hop", "scale_min", "scale_max"},
                     "graph");
      cfg.graph.chunks.chunk_size = g.value("chunk_size", cfg.graph.chunks.chunk_size);
      cfg.graph.cross.k = g.value("knn", cfg.graph.cross.k);
      cfg.graph.cross.weight = g.value("cross_edge_weight", cfg.graph.cross.weight);
      cfg.graph.cross.max_hop = g.value("max_hop", cfg.graph.cross.max_hop);
      cfg.graph.chunks.scale_min = g.value("scale_min", cfg.graph.chunks.scale_min);
      cfg.graph.chunks.scale_max = g.value("scale_max", cfg.graph.chunks.scale_max);
      if (g.contains("corr_threshold") && !g["corr_threshold"].is_null()) {
        cfg.graph.cross.corr_threshold = g["corr_threshold"].get<std::size_t>();
        cfg.graph.auto_threshold = false;
      }
    }
    if (j.contains("recall")) {
      const auto& r = j["recall"];
      reject_unknown(r, {"same_place_radius", "db_radius", "band", "ks", "query_offset", "query_noise"}, "recall");
      auto& p = cfg.recall.protocol;
      p.same_place_radius = r.value("same_place_radius", p.same_place_radius);
      p.db_radius = r.value("db_radius", p.db_radius);
      p.band = r.value("band", p.band);
      if (r.contains("ks")) p.ks = r["ks"].get<std::vector<std::size_t>>();
      cfg.recall.query_offset = r.value("query_offset", cfg.recall.query_offset);
      if (r.contains("query_noise")) r["query_noise"].get_to(cfg.recall.query_noise);
    }
    if (j.contains("run")) merge_run_config(j["run"], cfg.run);
    if (j.contains("route")) {
      const auto& r = j["route"];
      reject_unknown(r, {"start", "goal", "start_position", "start_yaw_deg"}, "route");
      cfg.start = r.value("start", cfg.start);
      if (r.contains("goal")) cfg.goal = r["goal"].get<std::string>();
      if (r.contains("start_position")) cfg.start_position = vec2(r["start_position"]);
      if (r.contains("start_yaw_deg")) cfg.start_yaw = r["start_yaw_deg"].get<double>() * M_PI / 180.0;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_json_file(path)); }

const TrajectorySpec& trajectory(const PipelineConfig& cfg, std::uint32_t id) {
  for (const auto& t : cfg.trajectories) {
    if (t.id == id) return t;
  }
  throw Error(ErrorCode::InvalidSpec, "no trajectory " + std::to_string(id) + " in config");
}

std::uint64_t explore_seed(std::uint64_t seed, std::uint32_t trajectory_id) {
  return derive_seed(seed, 0x4558504c00000000ULL + trajectory_id);
}

ExplorationLog explore(const World& world, const TrajectorySpec& t, const Rig& rig, const NoiseConfig& noise,
                       std::uint64_t seed) {
  ExploreOptions opts;
  opts.trajectory_id = t.id;
  opts.initial_yaw = t.initial_yaw;
  opts.spin_at_junctions = t.spin_at_junctions;
  opts.observation_noise = noise;
  opts.observation_seed = explore_seed(seed, t.id);
  return record_exploration(world, t.waypoints, rig, opts);
}

std::vector<DescriptorIndex::Entry> recall_queries(const World& world, const SceneGraph& graph, const Rig& rig,
                                                   const RecallOptions& opts, std::uint64_t seed,
                                                   std::unordered_map<FrameId, Vec2>* positions) {
  std::vector<DescriptorIndex::Entry> out;
  std::size_t n = 0;
  for (const auto& f : graph.frames()) {
    const auto& kf = graph.keyframe(f);
    if (positions) (*positions)[f] = kf.world_position_gt;
    const double side = (n++ % 2 == 0) ? 1.0 : -1.0;
    const double yaw = kf.world_yaw_gt;
    const Vec2 p = kf.world_position_gt + side * opts.query_offset * Vec2(-std::sin(yaw), std::cos(yaw));
    if (!world.contains(p)) continue;
    const FrameId q{kQueryTrajectoryBase + f.trajectory, f.index};
    const AgentState st{Pose::planar(p.x(), p.y(), yaw), 0.0};
    const auto obs = observe(world, st, rig, opts.query_noise,
                             derive_seed(seed, 0x5155455259000000ULL ^ std::hash<FrameId>{}(f)));
    if (obs.detections.empty()) continue;
    if (positions) (*positions)[q] = p;
    out.push_back({q, describe_frame(obs)});
  }
  return out;
}

}  // namespace vnav::pipeline
