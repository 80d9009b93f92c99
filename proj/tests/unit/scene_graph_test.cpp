#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vnav/error.hpp"
#include "vnav/nav_service.hpp"
#include "vnav/rng.hpp"
#include "vnav/scene_graph.hpp"
#include "vnav/serialization.hpp"

namespace vnav {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidSpec;
}

// Bare graph: trajectory t has sizes[t] frames, one chunk each.
SceneGraph skeleton(const std::vector<std::uint32_t>& sizes) {
  std::vector<ChunkNode> chunks;
  for (std::uint32_t t = 0; t < sizes.size(); ++t) {
    ChunkNode c;
    c.chunk_id = t;
    c.trajectory_id = t;
    for (std::uint32_t i = 0; i < sizes[t]; ++i) {
      Keyframe kf;
      kf.frame_id = {t, i};
      c.keyframes.push_back(kf);
    }
    chunks.push_back(std::move(c));
  }
  SceneGraph g;
  g.add_chunks(std::move(chunks));
  return g;
}

SceneGraph rebuild(const SceneGraph& src, const CrossEdgeOptions& cross) {
  SceneGraph g;
  g.add_chunks(src.chunks());
  g.set_index(build_index(g));
  add_sequential_edges(g);
  add_cross_edges(g, g.index(), cross);
  return g;
}

std::size_t cross_count(const SceneGraph& g) {
  std::size_t n = 0;
  for (const auto& e : g.edges()) n += e.kind == EdgeKind::Cross;
  return n;
}

TEST(BuildChunks, PartitionsInOrder) {
  const World w = generate_world(1, fixture::straight_spec(40.0));
  ExploreOptions o;
  o.initial_yaw = 0.0;
  const auto log = record_exploration(w, {{0.0, 0.0}, {35.5, 0.0}}, Rig{}, o);
  ASSERT_EQ(log.entries.size(), 143u);
  const auto chunks = build_chunks(log, w);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].keyframes.size(), 55u);
  EXPECT_EQ(chunks[1].keyframes.size(), 55u);
  EXPECT_EQ(chunks[2].keyframes.size(), 33u);
  std::uint32_t next = 0;
  for (const auto& c : chunks) {
    for (const auto& kf : c.keyframes) EXPECT_EQ(kf.frame_id, (FrameId{0, next++}));
  }
}

TEST(BuildChunks, PosesAreRelativeToAnchorTimesScale) {
  const World w = generate_world(2, fixture::straight_spec(30.0));
  ExploreOptions o;
  o.initial_yaw = 0.0;
  const auto log = record_exploration(w, {{0.0, 0.0}, {10.0, 0.0}, {10.0, 5.0}}, Rig{}, o);
  for (bool unit : {true, false}) {
    ChunkOptions co;
    co.chunk_size = 20;
    co.seed = 4;
    if (unit) co.scale_min = co.scale_max = 1.0;
    const auto chunks = build_chunks(log, w, co);
    std::size_t i = 0;
    for (const auto& c : chunks) {
      const double s = c.true_scale_gt;
      if (unit) {
        EXPECT_EQ(s, 1.0);
      } else {
        EXPECT_GE(s, 0.5);
        EXPECT_LE(s, 2.0);
      }
      const Pose anchor = log.rig.camera_pose(log.entries[i].pose);
      for (const auto& kf : c.keyframes) {
        const Pose want = relative(anchor, log.rig.camera_pose(log.entries[i].pose));
        ASSERT_LT((kf.pose_in_chunk.translation - s * want.translation).norm(), 1e-9);
        ASSERT_LT(kf.pose_in_chunk.rotation.angularDistance(want.rotation), 1e-9);
        ASSERT_EQ(kf.observation.size(), log.entries[i].observation.size());
        for (std::size_t d = 0; d < kf.observation.size(); ++d) {
          ASSERT_NEAR(kf.observation.detections[d].depth, s * log.entries[i].observation.detections[d].depth, 1e-9);
        }
        ++i;
      }
      for (const auto& lm : c.landmarks) {
        const Vec3 world_pt = anchor.apply(lm.point / s);
        ASSERT_LT((world_pt - w.landmarks()[lm.world_id].position).norm(), 1e-9);
      }
    }
    EXPECT_EQ(i, log.entries.size());
  }
}

TEST(BuildChunks, RejectsEmptyLogAndBadOptions) {
  const World w = generate_world(1, fixture::straight_spec(10.0));
  EXPECT_EQ(code_of([&] { build_chunks(ExplorationLog{}, w); }), ErrorCode::EmptyLog);
  ExploreOptions o;
  const auto log = record_exploration(w, {{0.0, 0.0}, {1.0, 0.0}}, Rig{}, o);
  ChunkOptions bad;
  bad.chunk_size = 0;
  EXPECT_EQ(code_of([&] { build_chunks(log, w, bad); }), ErrorCode::InvalidSpec);
}

TEST(SceneGraph, EdgeInvariants) {
  SceneGraph g = skeleton({3, 2});
  EXPECT_EQ(code_of([&] { g.add_edge({{0, 0}, {0, 2}, EdgeKind::Sequential}); }), ErrorCode::InconsistentGraph);
  EXPECT_EQ(code_of([&] { g.add_edge({{0, 0}, {1, 0}, EdgeKind::Sequential}); }), ErrorCode::InconsistentGraph);
  EXPECT_EQ(code_of([&] { g.add_edge({{0, 0}, {0, 1}, EdgeKind::Cross}); }), ErrorCode::InconsistentGraph);
  EXPECT_EQ(code_of([&] { g.add_edge({{0, 0}, {9, 9}, EdgeKind::Cross}); }), ErrorCode::InconsistentGraph);
  EXPECT_EQ(code_of([&] { g.add_edge({{0, 0}, {1, 0}, EdgeKind::Cross, 0.0}); }), ErrorCode::InconsistentGraph);
  EXPECT_EQ(code_of([&] { g.add_chunks(skeleton({1}).chunks()); }), ErrorCode::InconsistentGraph);
  g.add_edge({{0, 1}, {1, 1}, EdgeKind::Cross, 3.0});
  EXPECT_TRUE(g.has_edge({1, 1}, {0, 1}));
}

TEST(SceneGraph, SequentialEdgesPerTrajectory) {
  SceneGraph g = skeleton({5, 1, 4});
  EXPECT_EQ(add_sequential_edges(g), 4u + 0u + 3u);
  EXPECT_EQ(add_sequential_edges(g), 0u);
  for (const auto& e : g.edges()) {
    EXPECT_EQ(e.kind, EdgeKind::Sequential);
    EXPECT_EQ(e.weight, 1.0);
  }
  EXPECT_FALSE(g.has_edge({0, 4}, {1, 0}));
}

TEST(PlanPath, StartEqualsGoal) {
  SceneGraph g = skeleton({3});
  add_sequential_edges(g);
  const auto p = plan_path(g, {0, 1}, {0, 1});
  EXPECT_EQ(p.frames, (std::vector<FrameId>{{0, 1}}));
  EXPECT_EQ(p.total_cost, 0.0);
}

TEST(PlanPath, ChainAndErrors) {
  SceneGraph g = skeleton({10, 3});
  add_sequential_edges(g);
  const auto p = plan_path(g, {0, 9}, {0, 0});
  ASSERT_EQ(p.frames.size(), 10u);
  EXPECT_EQ(p.total_cost, 9.0);
  EXPECT_EQ(p.frames.front(), (FrameId{0, 9}));
  EXPECT_EQ(code_of([&] { plan_path(g, {0, 0}, {5, 0}); }), ErrorCode::GoalNotFound);
  EXPECT_EQ(code_of([&] { plan_path(g, {5, 0}, {0, 0}); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([&] { plan_path(g, {0, 0}, {1, 2}); }), ErrorCode::NoPath);
  g.add_edge({{0, 4}, {1, 0}, EdgeKind::Cross, 3.0});
  const auto q = plan_path(g, {0, 0}, {1, 2});
  EXPECT_EQ(q.total_cost, 4.0 + 3.0 + 2.0);
}

TEST(PlanPath, MatchesExhaustiveEnumeration) {
  Rng rng(77);
  int disconnected = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::uint32_t trajs = 1 + static_cast<std::uint32_t>(rng.below(3));
    std::vector<std::uint32_t> sizes;
    std::uint32_t total = 0;
    for (std::uint32_t t = 0; t < trajs; ++t) {
      sizes.push_back(1 + static_cast<std::uint32_t>(rng.below(4)));
      total += sizes.back();
    }
    ASSERT_LE(total, 12u);
    SceneGraph g = skeleton(sizes);
    // Random subset of sequential edges plus random cross edges with small
    // integer weights, so equal-cost ties are common.
    for (std::uint32_t t = 0; t < trajs; ++t) {
      for (std::uint32_t i = 0; i + 1 < sizes[t]; ++i) {
        if (rng.uniform() < 0.8) g.add_edge({{t, i}, {t, i + 1}, EdgeKind::Sequential, 1.0});
      }
    }
    const auto frames = g.frames();
    for (int c = 0; c < 6; ++c) {
      const FrameId a = frames[rng.below(frames.size())];
      const FrameId b = frames[rng.below(frames.size())];
      if (a.trajectory == b.trajectory || g.has_edge(a, b)) continue;
      g.add_edge({std::min(a, b), std::max(a, b), EdgeKind::Cross, double(1 + rng.below(3))});
    }
    const FrameId s = frames[rng.below(frames.size())];
    const FrameId t = frames[rng.below(frames.size())];
    const auto want = oracle::enumerate_paths(g, s, t);
    if (!want) {
      ++disconnected;
      EXPECT_EQ(code_of([&] { plan_path(g, s, t); }), ErrorCode::NoPath);
      continue;
    }
    const auto got = plan_path(g, s, t);
    ASSERT_DOUBLE_EQ(got.total_cost, want->cost) << trial;
    ASSERT_EQ(got.frames, want->frames) << trial;
  }
  EXPECT_GT(disconnected, 0);
  EXPECT_LT(disconnected, 400);
}

class CrossEdgeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { scenario_ = new fixture::Scenario(fixture::build(11, fixture::two_trajectory_spec())); }
  static void TearDownTestSuite() { delete scenario_; }
  static CrossEdgeOptions verified() {
    CrossEdgeOptions o;
    o.camera = scenario_->rig.camera;
    o.seed = 11;
    o.corr_threshold = default_corr_threshold(*scenario_->graph);
    return o;
  }
  static fixture::Scenario* scenario_;
};
fixture::Scenario* CrossEdgeTest::scenario_ = nullptr;

TEST_F(CrossEdgeTest, DefaultThresholdIsSixtyPercentOfMedian) {
  std::vector<std::size_t> counts;
  for (const auto& f : scenario_->graph->frames()) counts.push_back(scenario_->graph->keyframe(f).observation.size());
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  const double median = n % 2 ? double(counts[n / 2]) : 0.5 * double(counts[n / 2 - 1] + counts[n / 2]);
  EXPECT_EQ(default_corr_threshold(*scenario_->graph), static_cast<std::size_t>(std::floor(0.6 * median)));
}

TEST_F(CrossEdgeTest, EdgesJoinTheSharedSegment) {
  const auto& g = *scenario_->graph;
  ASSERT_GT(cross_count(g), 0u);
  for (const auto& e : g.edges()) {
    if (e.kind != EdgeKind::Cross) continue;
    EXPECT_NE(e.from.trajectory, e.to.trajectory);
    EXPECT_EQ(e.weight, 3.0);
    EXPECT_GT(e.correspondence_count, default_corr_threshold(g));
    const Vec2 a = g.keyframe(e.from).world_position_gt;
    const Vec2 b = g.keyframe(e.to).world_position_gt;
    EXPECT_LT((a - b).norm(), 2.0) << e.from.str() << " " << e.to.str();
    // Trajectory 1 overlaps trajectory 0 only on 10 <= x <= 20 along y = 0.
    EXPECT_GE(a.x(), 8.0);
    EXPECT_LE(a.x(), 22.0);
    EXPECT_LT(std::abs(a.y()), 2.0);
  }
}

TEST_F(CrossEdgeTest, ThresholdSaturationRemovesAll) {
  auto o = verified();
  o.corr_threshold = 1000000;
  EXPECT_EQ(cross_count(rebuild(*scenario_->graph, o)), 0u);
}

TEST_F(CrossEdgeTest, CountFallsAsThresholdRises) {
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  const std::size_t base = default_corr_threshold(*scenario_->graph);
  for (double f : {0.5, 1.0, 2.0, 3.0}) {
    auto o = verified();
    o.corr_threshold = static_cast<std::size_t>(f * double(base));
    const std::size_t n = cross_count(rebuild(*scenario_->graph, o));
    EXPECT_LE(n, prev) << f;
    prev = n;
  }
}

TEST_F(CrossEdgeTest, IndexMustCoverGraph) {
  SceneGraph g;
  g.add_chunks(scenario_->graph->chunks());
  add_sequential_edges(g);
  EXPECT_EQ(code_of([&] { add_cross_edges(g, DescriptorIndex{}, verified()); }), ErrorCode::InconsistentGraph);
}

TEST_F(CrossEdgeTest, PlanUsesCrossEdge) {
  const auto& g = *scenario_->graph;
  const auto p = plan_path(g, {0, 0}, resolve_frame(g, "1:last"));
  bool crossed = false;
  for (std::size_t i = 0; i + 1 < p.frames.size(); ++i) crossed |= p.frames[i].trajectory != p.frames[i + 1].trajectory;
  EXPECT_TRUE(crossed);
  // Far shorter than walking trajectory 1 from its start after reaching it.
  EXPECT_LT(p.total_cost, double(p.frames.size()) + 3.0);
}

TEST_F(CrossEdgeTest, SaveLoadRoundTrip) {
  const auto& g = *scenario_->graph;
  const auto path = std::filesystem::temp_directory_path() / "vnav_graph_roundtrip.json";
  save_graph(path, g);
  const SceneGraph h = load_graph(path);
  ASSERT_EQ(h.frames(), g.frames());
  ASSERT_EQ(h.edges().size(), g.edges().size());
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    EXPECT_EQ(h.edges()[i].from, g.edges()[i].from);
    EXPECT_EQ(h.edges()[i].to, g.edges()[i].to);
    EXPECT_EQ(h.edges()[i].kind, g.edges()[i].kind);
    EXPECT_EQ(h.edges()[i].weight, g.edges()[i].weight);
    EXPECT_EQ(h.edges()[i].correspondence_count, g.edges()[i].correspondence_count);
  }
  for (const auto& f : g.frames()) {
    const auto& a = g.keyframe(f);
    const auto& b = h.keyframe(f);
    ASSERT_EQ(a.pose_in_chunk.translation, b.pose_in_chunk.translation);
    ASSERT_EQ(a.observation.size(), b.observation.size());
    ASSERT_EQ(digest(a.observation), digest(b.observation));
    ASSERT_EQ(g.index().find(f)->values, h.index().find(f)->values);
  }
  for (std::size_t c = 0; c < g.chunks().size(); ++c) {
    EXPECT_EQ(g.chunks()[c].landmarks.size(), h.chunks()[c].landmarks.size());
    EXPECT_EQ(g.chunks()[c].true_scale_gt, h.chunks()[c].true_scale_gt);
  }
  EXPECT_EQ(plan_path(h, {0, 0}, resolve_frame(h, "1:last")).frames, plan_path(g, {0, 0}, resolve_frame(g, "1:last")).frames);

  // Truncated copy fails to load.
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  const auto cut = std::filesystem::temp_directory_path() / "vnav_graph_truncated.json";
  std::ofstream(cut) << text.substr(0, text.size() / 2);
  EXPECT_EQ(code_of([&] { load_graph(cut); }), ErrorCode::LoadFailed);
  EXPECT_EQ(code_of([&] { load_graph(std::filesystem::temp_directory_path() / "vnav_no_such_graph.json"); }),
            ErrorCode::LoadFailed);
  std::filesystem::remove(path);
  std::filesystem::remove(cut);
}

TEST(GraphFile, EmptyGraphRoundTrips) {
  const auto path = std::filesystem::temp_directory_path() / "vnav_graph_empty.json";
  save_graph(path, SceneGraph{});
  const SceneGraph h = load_graph(path);
  EXPECT_EQ(h.frame_count(), 0u);
  EXPECT_TRUE(h.edges().empty());
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace vnav
