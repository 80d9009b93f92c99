#include "vnav/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>

#include "vnav/error.hpp"
#include "vnav/pnp.hpp"
#include "vnav/rng.hpp"
#include "vnav/scale_est.hpp"

namespace vnav {

void SceneGraph::add_chunks(std::vector<ChunkNode> chunks) {
  for (auto& c : chunks) {
    const std::size_t ci = chunks_.size();
    for (std::size_t k = 0; k < c.keyframes.size(); ++k) {
      const FrameId f = c.keyframes[k].frame_id;
      if (!locator_.emplace(f, std::make_pair(ci, k)).second) {
        throw Error(ErrorCode::InconsistentGraph, "frame " + f.str() + " appears in two chunks");
      }
      adjacency_[f];
    }
    chunks_.push_back(std::move(c));
  }
}

void SceneGraph::add_edge(const FrameEdge& e) {
  if (!contains(e.from) || !contains(e.to)) throw Error(ErrorCode::InconsistentGraph, "edge endpoint not in graph");
  if (e.from == e.to) throw Error(ErrorCode::InconsistentGraph, "self edge " + e.from.str());
  if (!(e.weight > 0.0)) throw Error(ErrorCode::InconsistentGraph, "edge weight must be positive");
  const bool same_traj = e.from.trajectory == e.to.trajectory;
  if (e.kind == EdgeKind::Sequential) {
    const auto lo = std::min(e.from.index, e.to.index);
    const auto hi = std::max(e.from.index, e.to.index);
    if (!same_traj || hi != lo + 1) throw Error(ErrorCode::InconsistentGraph, "sequential edge must join consecutive frames");
  } else if (same_traj) {
    throw Error(ErrorCode::InconsistentGraph, "cross edge must join different trajectories");
  }
  const std::size_t idx = edges_.size();
  edges_.push_back(e);
  const auto insert_sorted = [&](const FrameId& at, const FrameId& other) {
    auto& adj = adjacency_[at];
    adj.insert(std::upper_bound(adj.begin(), adj.end(), std::make_pair(other, idx)), {other, idx});
  };
  insert_sorted(e.from, e.to);
  insert_sorted(e.to, e.from);
}

bool SceneGraph::has_edge(const FrameId& a, const FrameId& b) const {
  const auto it = adjacency_.find(a);
  if (it == adjacency_.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(), [&](const auto& p) { return p.first == b; });
}

std::vector<FrameId> SceneGraph::frames() const {
  std::vector<FrameId> out;
  out.reserve(locator_.size());
  for (const auto& [f, _] : locator_) out.push_back(f);
  std::sort(out.begin(), out.end());
  return out;
}

const Keyframe& SceneGraph::keyframe(const FrameId& f) const {
  const auto it = locator_.find(f);
  if (it == locator_.end()) throw Error(ErrorCode::InconsistentGraph, "unknown frame " + f.str());
  return chunks_[it->second.first].keyframes[it->second.second];
}

const ChunkNode& SceneGraph::chunk_of(const FrameId& f) const { return chunks_[chunk_index_of(f)]; }

std::size_t SceneGraph::chunk_index_of(const FrameId& f) const {
  const auto it = locator_.find(f);
  if (it == locator_.end()) throw Error(ErrorCode::InconsistentGraph, "unknown frame " + f.str());
  return it->second.first;
}

const std::vector<std::pair<FrameId, std::size_t>>& SceneGraph::neighbors(const FrameId& f) const {
  const auto it = adjacency_.find(f);
  if (it == adjacency_.end()) throw Error(ErrorCode::InconsistentGraph, "unknown frame " + f.str());
  return it->second;
}

std::vector<ChunkNode> build_chunks(const ExplorationLog& log, const World& world, const ChunkOptions& opts) {
  if (log.entries.empty()) throw Error(ErrorCode::EmptyLog, "exploration log has no entries");
  if (opts.chunk_size == 0) throw Error(ErrorCode::InvalidSpec, "chunk size must be positive");
  if (!(opts.scale_min > 0.0) || opts.scale_max < opts.scale_min) {
    throw Error(ErrorCode::InvalidSpec, "scale range must be positive and ordered");
  }

  std::vector<ChunkNode> chunks;
  const std::size_t n = log.entries.size();
  for (std::size_t begin = 0; begin < n; begin += opts.chunk_size) {
    const std::size_t end = std::min(n, begin + opts.chunk_size);
    ChunkNode chunk;
    chunk.chunk_id = opts.first_chunk_id + static_cast<std::uint32_t>(chunks.size());
    chunk.trajectory_id = log.trajectory_id;
    Rng rng(opts.seed, 0x5343414c0000ULL + chunk.chunk_id);
    const double s = opts.scale_max > opts.scale_min ? rng.uniform(opts.scale_min, opts.scale_max) : opts.scale_min;
    chunk.true_scale_gt = s;

    const Pose anchor_inv = log.rig.camera_pose(log.entries[begin].pose).inverse();
    std::set<std::size_t> seen;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = log.entries[i];
      Keyframe kf;
      kf.frame_id = {log.trajectory_id, static_cast<std::uint32_t>(i)};
      const Pose in_anchor = compose(anchor_inv, log.rig.camera_pose(e.pose));
      kf.pose_in_chunk.rotation = in_anchor.rotation;
      kf.pose_in_chunk.translation = s * in_anchor.translation;
      kf.observation = e.observation;
      for (auto& d : kf.observation.detections) d.depth *= s;
      kf.world_position_gt = e.pose.translation.head<2>();
      kf.world_yaw_gt = yaw_of(e.pose);
      chunk.keyframes.push_back(std::move(kf));

      AgentState st;
      st.pose = e.pose;
      for (const auto& d : observe(world, st, log.rig, NoiseConfig::none(), 0).detections) {
        seen.insert(static_cast<std::size_t>(d.landmark_id));
      }
    }
    for (auto id : seen) {
      const auto& lm = world.landmarks()[id];
      chunk.landmarks.push_back({s * anchor_inv.apply(lm.position), lm.descriptor, lm.is_ground,
                                 static_cast<std::int64_t>(id)});
    }
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

DescriptorIndex build_index(const SceneGraph& graph) {
  std::vector<DescriptorIndex::Entry> entries;
  for (const auto& c : graph.chunks()) {
    for (const auto& kf : c.keyframes) entries.push_back({kf.frame_id, describe_frame(kf.observation)});
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
  return DescriptorIndex(std::move(entries));
}

std::size_t add_sequential_edges(SceneGraph& graph) {
  const auto frames = graph.frames();  // sorted: trajectory, then index
  std::size_t added = 0;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    const FrameId a = frames[i];
    const FrameId b = frames[i + 1];
    if (a.trajectory != b.trajectory || b.index != a.index + 1 || graph.has_edge(a, b)) continue;
    graph.add_edge({a, b, EdgeKind::Sequential, 1.0, 0});
    ++added;
  }
  return added;
}

std::size_t default_corr_threshold(const SceneGraph& graph) {
  std::vector<std::size_t> counts;
  for (const auto& c : graph.chunks()) {
    for (const auto& kf : c.keyframes) counts.push_back(kf.observation.size());
  }
  if (counts.empty()) return 0;
  std::sort(counts.begin(), counts.end());
  const std::size_t m = counts.size();
  const double median = m % 2 ? double(counts[m / 2]) : 0.5 * double(counts[m / 2 - 1] + counts[m / 2]);
  return static_cast<std::size_t>(std::floor(0.6 * median));
}

namespace {

// PnP of one frame's detections against a candidate keyframe; the implied
// camera offset in meters, or nullopt when no pose is found.
std::optional<double> hop_length(const FrameObservation& obs, const Keyframe& target,
                                 const std::vector<DescriptorMatch>& matches, const CameraModel& cam, double scale,
                                 std::uint64_t seed) {
  std::vector<Correspondence2D3D> corrs;
  for (const auto& m : matches) {
    const Detection& t = target.observation.detections[m.train];
    if (!(t.depth > 0.0)) continue;
    corrs.push_back({obs.detections[m.query].pixel, backproject(cam, target.pose_in_chunk, t.pixel, t.depth),
                     obs.detections[m.query].landmark_id});
  }
  if (corrs.size() < kPnPMinimalSample) return std::nullopt;
  RansacConfig cfg = RansacConfig::pnp_defaults();
  cfg.seed = seed;
  try {
    const PnPResult r = solve_pnp_ransac(corrs, cam, cfg);
    return scale * relative(r.pose, target.pose_in_chunk).translation.norm();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::InsufficientData) throw;
    return std::nullopt;
  }
}

}  // namespace

std::size_t add_cross_edges(SceneGraph& graph, const DescriptorIndex& index, const CrossEdgeOptions& opts) {
  if (index.size() != graph.frame_count()) {
    throw Error(ErrorCode::InconsistentGraph, "index covers " + std::to_string(index.size()) + " frames, graph has " +
                                                  std::to_string(graph.frame_count()));
  }
  const bool verify = opts.camera && opts.max_hop > 0.0;
  std::unordered_map<std::size_t, double> scales;
  const auto scale_of = [&](const FrameId& f) {
    const std::size_t ci = graph.chunk_index_of(f);
    auto it = scales.find(ci);
    if (it == scales.end()) {
      RansacConfig plane = RansacConfig::plane_defaults();
      plane.seed = derive_seed(opts.seed, 0x504c4e00ULL + ci);
      it = scales.emplace(ci, estimate_scale_or_fallback(graph.chunks()[ci], *opts.camera, opts.camera_height, plane)
                                  .scale)
               .first;
    }
    return it->second;
  };

  std::size_t added = 0;
  for (const FrameId& f : graph.frames()) {
    const GlobalDescriptor* q = index.find(f);
    if (!q) throw Error(ErrorCode::InconsistentGraph, "frame " + f.str() + " missing from index");
    const auto candidates = index.knn(*q, opts.k, [&](const FrameId& c) { return c.trajectory != f.trajectory; });
    const auto& obs = graph.keyframe(f).observation;
    struct Ranked {
      FrameId frame;
      std::vector<DescriptorMatch> matches;
    };
    std::vector<Ranked> ranked;
    for (const auto& cand : candidates) {
      if (!graph.contains(cand.frame)) throw Error(ErrorCode::InconsistentGraph, "index frame " + cand.frame.str() + " not in graph");
      ranked.push_back({cand.frame, match_mutual_nn(obs, graph.keyframe(cand.frame).observation, opts.matcher)});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      return a.matches.size() != b.matches.size() ? a.matches.size() > b.matches.size() : a.frame < b.frame;
    });
    std::optional<FrameId> best;
    std::size_t best_count = 0;
    for (const auto& r : ranked) {
      if (r.matches.size() <= opts.corr_threshold) break;
      if (verify) {
        const std::uint64_t seed = derive_seed(opts.seed, (std::uint64_t(std::hash<FrameId>{}(f)) * 31) ^
                                                              std::hash<FrameId>{}(r.frame));
        const auto hop = hop_length(obs, graph.keyframe(r.frame), r.matches, *opts.camera, scale_of(r.frame), seed);
        if (!hop || *hop > opts.max_hop) continue;
      }
      best = r.frame;
      best_count = r.matches.size();
      break;
    }
    if (!best) continue;
    const FrameId a = std::min(f, *best);
    const FrameId b = std::max(f, *best);
    if (graph.has_edge(a, b)) continue;
    graph.add_edge({a, b, EdgeKind::Cross, opts.weight, best_count});
    ++added;
  }
  return added;
}

SceneGraph build_graph(const std::vector<ExplorationLog>& logs, const World& world, const GraphBuildOptions& opts) {
  SceneGraph graph;
  std::uint32_t next_chunk = opts.chunks.first_chunk_id;
  for (const auto& log : logs) {
    ChunkOptions co = opts.chunks;
    co.first_chunk_id = next_chunk;
    auto chunks = build_chunks(log, world, co);
    next_chunk += static_cast<std::uint32_t>(chunks.size());
    graph.add_chunks(std::move(chunks));
  }
  graph.set_index(build_index(graph));
  add_sequential_edges(graph);
  CrossEdgeOptions cross = opts.cross;
  if (!cross.camera && !logs.empty()) cross.camera = logs.front().rig.camera;
  cross.seed = opts.chunks.seed;
  if (opts.auto_threshold) cross.corr_threshold = default_corr_threshold(graph);
  add_cross_edges(graph, graph.index(), cross);
  return graph;
}

PlannedPath plan_path(const SceneGraph& graph, const FrameId& start, const FrameId& goal) {
  if (!graph.contains(goal)) throw Error(ErrorCode::GoalNotFound, "goal frame " + goal.str() + " not in graph");
  if (!graph.contains(start)) throw Error(ErrorCode::InvalidSpec, "start frame " + start.str() + " not in graph");

  // Distances to the goal, then a greedy walk along tight edges picking the
  // smallest neighbor id: yields the lexicographically smallest shortest path.
  std::unordered_map<FrameId, double> dist;
  using Item = std::pair<double, FrameId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[goal] = 0.0;
  open.push({0.0, goal});
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, ei] : graph.neighbors(u)) {
      const double nd = d + graph.edges()[ei].weight;
      const auto it = dist.find(v);
      if (it == dist.end() || nd < it->second) {
        dist[v] = nd;
        open.push({nd, v});
      }
    }
  }
  const auto sit = dist.find(start);
  if (sit == dist.end()) throw Error(ErrorCode::NoPath, "no path from " + start.str() + " to " + goal.str());

  PlannedPath path;
  path.total_cost = sit->second;
  FrameId u = start;
  path.frames.push_back(u);
  while (u != goal) {
    const double du = dist.at(u);
    std::optional<FrameId> next;
    for (const auto& [v, ei] : graph.neighbors(u)) {
      const auto it = dist.find(v);
      if (it == dist.end()) continue;
      const double w = graph.edges()[ei].weight;
      if (std::abs(du - (w + it->second)) <= 1e-9 * (1.0 + du)) {
        next = v;  // neighbors are sorted, first tight edge is the smallest id
        break;
      }
    }
    if (!next) throw Error(ErrorCode::NoPath, "inconsistent distance field");
    u = *next;
    path.frames.push_back(u);
  }
  return path;
}

}  // namespace vnav
