#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vnav/error.hpp"
#include "vnav/nav_controller.hpp"
#include "vnav/rng.hpp"
#include "vnav/serialization.hpp"
#include "vnav/sim_world.hpp"

namespace vnav {
namespace {

TEST(GenerateWorld, SameSeedSameWorld) {
  const auto spec = fixture::straight_spec(20.0);
  const World a = generate_world(5, spec), b = generate_world(5, spec);
  EXPECT_EQ(a.digest(), b.digest());
  ASSERT_EQ(a.landmarks().size(), b.landmarks().size());
  for (std::size_t i = 0; i < a.landmarks().size(); ++i) {
    ASSERT_EQ(a.landmarks()[i].position, b.landmarks()[i].position);
    ASSERT_EQ(a.landmarks()[i].descriptor, b.landmarks()[i].descriptor);
  }
  EXPECT_NE(generate_world(6, spec).digest(), a.digest());
}

TEST(GenerateWorld, DoublingDensityDoublesCount) {
  const double n1 = double(generate_world(1, fixture::straight_spec(40.0, 1.0)).landmarks().size());
  const double n2 = double(generate_world(1, fixture::straight_spec(40.0, 2.0)).landmarks().size());
  EXPECT_NEAR(n2 / n1, 2.0, 0.2);
}

TEST(GenerateWorld, GroundOnPlaneAndUnitDescriptors) {
  const World w = generate_world(2, fixture::two_trajectory_spec());
  std::size_t ground = 0;
  for (const auto& lm : w.landmarks()) {
    double n2 = 0.0;
    for (float v : lm.descriptor) n2 += double(v) * v;
    ASSERT_NEAR(std::sqrt(n2), 1.0, 1e-6);
    if (lm.is_ground) {
      ++ground;
      ASSERT_EQ(lm.position.z(), 0.0);
    } else {
      ASSERT_GE(lm.position.z(), w.spec().structure_z_min);
      ASSERT_LE(lm.position.z(), w.spec().structure_z_max);
    }
  }
  EXPECT_GT(ground, 0u);
}

TEST(GenerateWorld, RejectsBadSpecs) {
  auto spec = fixture::straight_spec(10.0);
  spec.extent_max = spec.extent_min;
  EXPECT_THROW(generate_world(1, spec), Error);
  spec = fixture::straight_spec(10.0, 0.0);
  EXPECT_THROW(generate_world(1, spec), Error);
}

TEST(ApplyAction, FourForwardIsOneMeter) {
  AgentState s{Pose::planar(1.0, 2.0, M_PI / 2), 0.0};
  for (int i = 0; i < 4; ++i) s = apply_action(s, Action::Forward, {}, i);
  EXPECT_NEAR(s.x(), 1.0, 1e-12);
  EXPECT_NEAR(s.y(), 3.0, 1e-12);
  EXPECT_NEAR(s.time, 4 * kActionSeconds, 1e-12);
}

TEST(ApplyAction, FullTurnRestoresHeading) {
  AgentState s{Pose::planar(0, 0, 0.3), 0.0};
  for (int i = 0; i < 24; ++i) s = apply_action(s, Action::TurnLeft, {}, i);
  EXPECT_NEAR(std::remainder(s.yaw() - 0.3, 2 * M_PI), 0.0, 1e-9);
  EXPECT_NEAR(s.x(), 0.0, 1e-12);
  const AgentState b = apply_action({Pose::planar(0, 0, 0.0), 0.0}, Action::Backward, {}, 0);
  EXPECT_NEAR(b.x(), -0.25, 1e-12);
  const AgentState r = apply_action({Pose::planar(0, 0, 0.0), 0.0}, Action::TurnRight, {}, 0);
  EXPECT_NEAR(r.yaw(), -deg2rad(15.0), 1e-12);
}

TEST(ApplyAction, DistanceNoiseIsUnbiased) {
  ActuationNoise n;
  n.distance_sigma = 0.01;
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const AgentState s = apply_action({Pose::planar(0, 0, 0), 0.0}, Action::Forward, n, 1000 + i);
    sum += s.position().norm();
  }
  EXPECT_NEAR(sum / 1000.0, 0.25, 0.001);
}

TEST(ApplyAction, StepMultiplierScalesTranslation) {
  ActuationNoise n;
  n.step_multiplier = 0.8;
  const AgentState s = apply_action({Pose::planar(0, 0, 0), 0.0}, Action::Forward, n, 0);
  EXPECT_NEAR(s.x(), 0.20, 1e-12);
}

TEST(RecordExploration, StraightMeterIsFourForward) {
  const World w = generate_world(1, fixture::straight_spec(10.0));
  ExploreOptions o;
  o.initial_yaw = 0.0;
  const auto log = record_exploration(w, {{0.0, 0.0}, {1.0, 0.0}}, Rig{}, o);
  ASSERT_EQ(log.entries.size(), 5u);
  EXPECT_FALSE(log.entries[0].action.has_value());
  for (std::size_t i = 1; i < 5; ++i) EXPECT_EQ(*log.entries[i].action, Action::Forward);
}

TEST(RecordExploration, QuarterTurnThenFourForward) {
  const World w = generate_world(1, fixture::straight_spec(10.0));
  ExploreOptions o;
  o.initial_yaw = 0.0;
  const auto log = record_exploration(w, {{0.0, 0.0}, {0.0, 1.0}}, Rig{}, o);
  // 90 deg / 15 deg = 6 turns, 1 m / 0.25 m = 4 steps.
  std::vector<Action> expect(6, Action::TurnLeft);
  expect.insert(expect.end(), 4, Action::Forward);
  std::vector<Action> got;
  for (std::size_t i = 1; i < log.entries.size(); ++i) got.push_back(*log.entries[i].action);
  EXPECT_EQ(got, expect);
}

TEST(RecordExploration, PosesMatchZeroNoiseReplayAndTimeIncreases) {
  const auto sc = fixture::build(3, fixture::two_trajectory_spec());
  for (const auto& log : sc.logs) {
    const auto replay = replay_actions(log, {}, 0);
    ASSERT_EQ(replay.size(), log.entries.size());
    for (std::size_t i = 0; i < replay.size(); ++i) {
      ASSERT_LT(oracle::translation_gap(replay[i].pose, log.entries[i].pose), 1e-9);
      ASSERT_LT(oracle::rotation_gap(replay[i].pose, log.entries[i].pose), 1e-9);
      if (i > 0) ASSERT_GT(log.entries[i].timestamp, log.entries[i - 1].timestamp);
    }
    // Every waypoint reached within 0.3 m: the last one is the final pose.
    const auto& wps = sc.world->spec().corridors[log.trajectory_id].waypoints;
    EXPECT_LT((log.entries.back().pose.translation.head<2>() - wps.back()).norm(), 0.3);
  }
}

TEST(RecordExploration, SpinAtJunctionsAddsFullTurn) {
  const World w = generate_world(1, fixture::two_trajectory_spec());
  ExploreOptions plain, spin;
  spin.spin_at_junctions = true;
  const std::vector<Vec2> wps{{10.0, 0.0}, {20.0, 0.0}, {20.0, 20.0}};
  const auto a = record_exploration(w, wps, Rig{}, plain);
  const auto b = record_exploration(w, wps, Rig{}, spin);
  EXPECT_EQ(b.entries.size(), a.entries.size() + 24);
}

TEST(RecordExploration, WaypointOutsideWorldFails) {
  const World w = generate_world(1, fixture::straight_spec(10.0));
  try {
    record_exploration(w, {{0.0, 0.0}, {500.0, 0.0}}, Rig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RecordingFailed);
  }
}

TEST(Observe, ZeroNoiseMatchesProjection) {
  const World w = generate_world(4, fixture::straight_spec(30.0));
  const Rig rig;
  const AgentState a{Pose::planar(5.0, 0.3, 0.1), 0.0};
  const auto obs = observe(w, a, rig, NoiseConfig::none(), 1);
  ASSERT_FALSE(obs.empty());
  const Pose cam = rig.camera_pose(a.pose);
  for (const auto& d : obs.detections) {
    ASSERT_GE(d.landmark_id, 0);
    const auto px = project(rig.camera, cam, w.landmarks()[d.landmark_id].position);
    ASSERT_TRUE(px);
    EXPECT_EQ(px->u, d.pixel.u);
    EXPECT_EQ(px->v, d.pixel.v);
  }
}

TEST(Observe, VisibleSetMatchesFrustumOracle) {
  const World w = generate_world(5, fixture::straight_spec(40.0));
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const AgentState a{Pose::planar(rng.uniform(0, 40), rng.uniform(-1.5, 1.5), rng.uniform(-M_PI, M_PI)), 0.0};
    const auto obs = observe(w, a, Rig{}, NoiseConfig::none(), i);
    std::vector<std::size_t> got;
    for (const auto& d : obs.detections) got.push_back(static_cast<std::size_t>(d.landmark_id));
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, oracle::visible_landmarks(w, a, Rig{})) << i;
  }
}

TEST(Observe, FullDropoutLeavesOnlySpurious) {
  const World w = generate_world(6, fixture::straight_spec(20.0));
  NoiseConfig n;
  n.dropout_rate = 1.0;
  n.outlier_rate = 0.3;
  const auto obs = observe(w, {Pose::planar(5, 0, 0), 0.0}, Rig{}, n, 3);
  ASSERT_FALSE(obs.empty());
  for (const auto& d : obs.detections) EXPECT_EQ(d.landmark_id, kSpuriousLandmark);
  n.outlier_rate = 0.0;
  EXPECT_TRUE(observe(w, {Pose::planar(5, 0, 0), 0.0}, Rig{}, n, 3).empty());
}

TEST(Observe, NoisyPixelsStayInBoundsAndDeterministic) {
  const World w = generate_world(7, fixture::straight_spec(20.0));
  const CameraModel cam;
  const AgentState a{Pose::planar(3, 0, 0), 0.0};
  const auto obs = observe(w, a, Rig{}, NoiseConfig::defaults(), 11);
  for (const auto& d : obs.detections) {
    ASSERT_TRUE(cam.in_bounds(d.pixel));
    ASSERT_GT(d.depth, 0.0);
  }
  EXPECT_EQ(digest(obs), digest(observe(w, a, Rig{}, NoiseConfig::defaults(), 11)));
  EXPECT_NE(digest(obs), digest(observe(w, a, Rig{}, NoiseConfig::defaults(), 12)));
}

TEST(NoiseConfig, Validation) {
  NoiseConfig n;
  n.pixel_sigma = -1.0;
  EXPECT_THROW(n.validate(), Error);
  n = {};
  n.outlier_rate = 1.0;
  EXPECT_THROW(n.validate(), Error);
  EXPECT_NO_THROW(NoiseConfig::defaults().validate());
}

TEST(OpenLoopReplay, DriftsOverHundredMeters) {
  const auto sc = fixture::straight(9, 100.0);
  const auto& log = sc.logs.front();
  const RunMetrics exact = evaluate_replay(log, {}, 0);
  EXPECT_LT(exact.final_distance_to_goal, 1e-9);
  int drifted = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    drifted += evaluate_replay(log, NoiseConfig::defaults().actuation, seed).final_distance_to_goal > 1.5;
  }
  EXPECT_GE(drifted, 45);
}

}  // namespace
}  // namespace vnav
