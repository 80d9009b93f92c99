#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vnav/frame_id.hpp"
#include "vnav/matcher.hpp"
#include "vnav/place_index.hpp"
#include "vnav/sim_world.hpp"

namespace vnav {

/// One posed image of a chunk. Poses and depths are in chunk units.
struct Keyframe {
  FrameId frame_id;
  Pose pose_in_chunk;  // camera pose in the chunk frame
  FrameObservation observation;
  // Ground truth kept for evaluation; the controller never reads it.
  Vec2 world_position_gt = Vec2::Zero();
  double world_yaw_gt = 0.0;
};

struct ChunkLandmark {
  WorldPoint point;  // chunk units
  Descriptor descriptor;
  bool is_ground = false;
  std::int64_t world_id = -1;  // evaluation only
};

/// Local scene model: up to chunk_size consecutive keyframes of one
/// trajectory, expressed in a frame anchored at the first keyframe's camera
/// and scaled by an unknown uniform factor (chunk units per meter).
struct ChunkNode {
  std::uint32_t chunk_id = 0;
  std::uint32_t trajectory_id = 0;
  std::vector<Keyframe> keyframes;
  std::vector<ChunkLandmark> landmarks;
  double true_scale_gt = 1.0;                  // chunk units per meter, evaluation only
  std::optional<double> estimated_scale;       // meters per chunk unit
};

enum class EdgeKind { Sequential, Cross };

struct FrameEdge {
  FrameId from;
  FrameId to;
  EdgeKind kind = EdgeKind::Sequential;
  double weight = 1.0;
  std::size_t correspondence_count = 0;  // cross edges only
};

struct PlannedPath {
  std::vector<FrameId> frames;
  double total_cost = 0.0;
};

/// Frame-level navigation graph over every chunk. Undirected for planning.
class SceneGraph {
 public:
  SceneGraph() = default;

  /// Appends chunks; throws InconsistentGraph on a duplicate frame id.
  void add_chunks(std::vector<ChunkNode> chunks);
  /// Throws InconsistentGraph when an endpoint is unknown or the edge
  /// violates its kind's invariant.
  void add_edge(const FrameEdge& e);
  bool has_edge(const FrameId& a, const FrameId& b) const;

  void set_index(DescriptorIndex index) { index_ = std::move(index); }
  const DescriptorIndex& index() const { return index_; }

  const std::vector<ChunkNode>& chunks() const { return chunks_; }
  std::vector<ChunkNode>& mutable_chunks() { return chunks_; }
  const std::vector<FrameEdge>& edges() const { return edges_; }
  std::size_t frame_count() const { return locator_.size(); }
  /// All frame ids, ascending.
  std::vector<FrameId> frames() const;

  bool contains(const FrameId& f) const { return locator_.count(f) != 0; }
  const Keyframe& keyframe(const FrameId& f) const;
  const ChunkNode& chunk_of(const FrameId& f) const;
  std::size_t chunk_index_of(const FrameId& f) const;
  /// (neighbor, edge index) pairs, neighbor ascending.
  const std::vector<std::pair<FrameId, std::size_t>>& neighbors(const FrameId& f) const;

 private:
  std::vector<ChunkNode> chunks_;
  std::vector<FrameEdge> edges_;
  std::unordered_map<FrameId, std::pair<std::size_t, std::size_t>> locator_;
  std::unordered_map<FrameId, std::vector<std::pair<FrameId, std::size_t>>> adjacency_;
  DescriptorIndex index_;
};

struct ChunkOptions {
  std::size_t chunk_size = 55;
  double scale_min = 0.5;
  double scale_max = 2.0;
  std::uint64_t seed = 0;
  std::uint32_t first_chunk_id = 0;
};

/// Partitions a log in order into chunks of at most chunk_size frames.
/// Throws EmptyLog for a log without entries.
std::vector<ChunkNode> build_chunks(const ExplorationLog& log, const World& world, const ChunkOptions& opts = {});

/// Global descriptors of every keyframe.
DescriptorIndex build_index(const SceneGraph& graph);

/// One weight-1 edge per consecutive frame pair of each trajectory.
std::size_t add_sequential_edges(SceneGraph& graph);

struct CrossEdgeOptions {
  std::size_t k = 5;
  std::size_t corr_threshold = 0;
  double weight = 3.0;
  MatcherConfig matcher;
  /// Geometric check, applied when a camera is given: the candidate is kept
  /// only if PnP against it implies a metric offset of at most max_hop, so
  /// the controller can traverse the hop with margin under its 3 m cap.
  /// 0 disables the check.
  std::optional<CameraModel> camera;
  double max_hop = 1.5;
  double camera_height = 0.25;
  std::uint64_t seed = 0;
};

/// Threshold used when none is given: 60% of the median per-frame detection
/// count.
std::size_t default_corr_threshold(const SceneGraph& graph);

/// For each frame, retrieves the top-k frames of other trajectories, re-ranks
/// them by mutual-NN correspondence count, and links the best one (the best
/// that passes the geometric check, when enabled) if its count exceeds the
/// threshold. Symmetric duplicates are merged. Returns the
/// number of edges added. Throws InconsistentGraph when the index does not
/// cover the graph's frames.
std::size_t add_cross_edges(SceneGraph& graph, const DescriptorIndex& index, const CrossEdgeOptions& opts);

struct GraphBuildOptions {
  ChunkOptions chunks;
  CrossEdgeOptions cross;
  bool auto_threshold = true;  // use default_corr_threshold
};

/// Chunks every log, indexes all frames, and adds sequential and cross edges.
SceneGraph build_graph(const std::vector<ExplorationLog>& logs, const World& world, const GraphBuildOptions& opts);

/// Minimum-weight path; among equal-cost paths the lexicographically
/// smallest frame sequence. Throws GoalNotFound / InvalidSpec for unknown
/// endpoints and NoPath when they are disconnected.
PlannedPath plan_path(const SceneGraph& graph, const FrameId& start, const FrameId& goal);

}  // namespace vnav
