#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vnav/geom.hpp"
#include "vnav/observation.hpp"

namespace vnav {

enum class Action { Forward, Backward, TurnLeft, TurnRight };

inline constexpr double kStepMeters = 0.25;
inline constexpr double kTurnDegrees = 15.0;
/// Seconds per discrete action: 908 teleoperated actions took 15.8 minutes.
inline constexpr double kActionSeconds = 15.8 * 60.0 / 908.0;

std::string_view to_string(Action a);
/// Accepts the names produced by to_string plus the short forms F/B/L/R.
Action parse_action(std::string_view s);

struct Landmark {
  WorldPoint position;
  Descriptor descriptor;
  bool is_ground = false;
};

struct Corridor {
  std::vector<Vec2> waypoints;
  double width = 3.0;
  /// Insert a full in-place turn at interior waypoints while exploring.
  bool spin_at_junctions = false;
};

struct WorldSpec {
  Vec2 extent_min{-10.0, -10.0};
  Vec2 extent_max{110.0, 10.0};
  double landmark_density = 1.0;  // multiplier on the base densities below
  double ground_per_m2 = 25.0;
  double structure_per_m2 = 3.0;
  double structure_band_near = 0.5;  // lateral distance beyond the corridor edge
  double structure_band_far = 2.5;
  double structure_z_min = 0.3;
  double structure_z_max = 5.0;
  double max_range = 25.0;
  double ground_range = 2.5;  // ground texture resolves only near the camera
  std::size_t descriptor_dim = kDescriptorDim;
  std::vector<Corridor> corridors;
};

/// Static synthetic environment. Immutable after generation.
class World {
 public:
  World(std::uint64_t seed, WorldSpec spec, std::vector<Landmark> landmarks);

  std::uint64_t seed() const { return seed_; }
  const WorldSpec& spec() const { return spec_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  bool contains(const Vec2& p) const;

  /// Ids of landmarks whose horizontal distance to center is <= radius,
  /// ascending.
  std::vector<std::size_t> landmarks_near(const Vec3& center, double radius) const;

  std::uint64_t digest() const;

 private:
  std::uint64_t seed_;
  WorldSpec spec_;
  std::vector<Landmark> landmarks_;
  double cell_ = 5.0;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> grid_;

  std::int64_t cell_key(std::int64_t ix, std::int64_t iy) const { return (ix << 32) ^ (iy & 0xffffffff); }
};

/// Throws InvalidSpec for a zero-area extent or non-positive density.
World generate_world(std::uint64_t seed, const WorldSpec& spec);

/// Camera intrinsics plus the rigid body-to-camera mount.
struct Rig {
  CameraModel camera;
  Pose mount = Pose::planar(0.0, 0.0, 0.0, 0.25);

  Pose camera_pose(const Pose& body) const { return compose(body, mount); }
};

struct ActuationNoise {
  double distance_sigma = 0.0;  // meters per translation
  double heading_sigma = 0.0;   // radians of drift per translation
  double turn_sigma = 0.0;      // radians per rotation
  double step_multiplier = 1.0; // calibration of the nominal 0.25 m step
};

struct NoiseConfig {
  double pixel_sigma = 0.0;
  double descriptor_sigma = 0.0;
  double outlier_rate = 0.0;
  double dropout_rate = 0.0;
  ActuationNoise actuation;
  double ground_mislabel_rate = 0.0;

  static NoiseConfig none() { return {}; }
  /// Moderate sensing and actuation noise used by default for navigation.
  static NoiseConfig defaults();
  /// Throws InvalidSpec on negative values or rates outside [0, 1].
  void validate() const;
};

struct AgentState {
  Pose pose;  // body pose in the world, planar (z = 0, level)
  double time = 0.0;

  double x() const { return pose.translation.x(); }
  double y() const { return pose.translation.y(); }
  double yaw() const { return yaw_of(pose); }
  Vec2 position() const { return pose.translation.head<2>(); }
};

/// One step of the discrete action model, with Gaussian perturbation drawn
/// from Rng(seed). Time advances by kActionSeconds.
AgentState apply_action(const AgentState& state, Action action, const ActuationNoise& noise,
                        std::uint64_t seed);

/// Renders the landmarks visible from the agent's camera, then applies noise
/// drawn from Rng(seed): dropout, pixel jitter (detections pushed out of the
/// image are dropped), descriptor jitter, spurious detections that copy the
/// descriptor of a random visible landmark at a random pixel, and ground flag
/// flips.
FrameObservation observe(const World& world, const AgentState& agent, const Rig& rig,
                         const NoiseConfig& noise, std::uint64_t seed);

struct LogEntry {
  double timestamp = 0.0;
  std::optional<Action> action;  // empty for the first frame
  Pose pose;                     // ground-truth body pose
  FrameObservation observation;
};

/// Noise-free teleoperation record of one trajectory.
struct ExplorationLog {
  std::uint32_t trajectory_id = 0;
  Rig rig;
  NoiseConfig observation_noise;  // actuation fields unused
  std::uint64_t observation_seed = 0;
  std::vector<LogEntry> entries;
};

/// Seed used for the observation of entry `index` of a log.
std::uint64_t observation_seed_for(std::uint64_t log_seed, std::size_t index);

struct ExploreOptions {
  std::uint32_t trajectory_id = 0;
  std::optional<double> initial_yaw;  // default: bearing to the second waypoint
  bool spin_at_junctions = false;
  NoiseConfig observation_noise = NoiseConfig::none();
  std::uint64_t observation_seed = 0;
  std::size_t max_actions = 100000;
};

/// Greedy waypoint follower: turn while the bearing error exceeds 7.5
/// degrees, otherwise step forward, until within half a step of the
/// waypoint. Throws RecordingFailed when a waypoint lies outside the world or
/// cannot be reached.
ExplorationLog record_exploration(const World& world, const std::vector<Vec2>& waypoints, const Rig& rig,
                                  const ExploreOptions& opts = {});

/// Re-executes the logged actions from the first logged pose.
std::vector<AgentState> replay_actions(const ExplorationLog& log, const ActuationNoise& noise,
                                       std::uint64_t seed);

}  // namespace vnav
