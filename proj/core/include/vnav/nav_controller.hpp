#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vnav/matcher.hpp"
#include "vnav/metrics.hpp"
#include "vnav/pnp.hpp"
#include "vnav/scale_est.hpp"
#include "vnav/scene_graph.hpp"
#include "vnav/sim_world.hpp"

namespace vnav {

struct NavConfig {
  double pos_reach_tol = 0.30;      // meters
  double yaw_reach_tol_deg = 10.0;
  int max_attempts_per_frame = 6;
  double max_step_translation = 3.0;  // meters; larger implied moves are ignored
  double backward_bearing_deg = 135.0;
  bool allow_skip = true;  // try target + 1 on alternate failed attempts
  MatcherConfig matcher;
  RansacConfig pnp = RansacConfig::pnp_defaults();
  double camera_height = kCameraHeightMeters;

  /// Throws InvalidSpec when a field is not positive.
  void validate() const;
};

struct LocalizationResult {
  Pose pose_in_chunk;  // camera pose
  std::size_t matches = 0;
  std::size_t inliers = 0;
  double mean_reproj_error = 0.0;
  double metric_translation = 0.0;  // to the target, meters
  bool accepted = false;
  std::string reason;  // empty when accepted
};

struct ActionPlan {
  std::vector<Action> actions;
  double theta1 = 0.0;    // rad, turn before translating
  double distance = 0.0;  // meters, signed (negative when reversing)
  double theta2 = 0.0;    // rad, turn after translating
};

/// 2D-3D correspondences between the observation and the target keyframe:
/// mutual-NN descriptor matches, with each 3D point back-projected from the
/// target detection's depth through the target's chunk pose.
/// Throws InsufficientMatches below 6 matches, InconsistentGraph when the
/// target is not part of the chunk.
std::vector<Correspondence2D3D> match_to_target(const FrameObservation& obs, const Keyframe& target,
                                                const ChunkNode& chunk, const CameraModel& cam,
                                                const NavConfig& cfg);

/// PnP-RANSAC + Gauss-Newton against the target keyframe. Failures are
/// reported through accepted = false with a reason.
LocalizationResult localize(const FrameObservation& obs, const Keyframe& target, const ChunkNode& chunk,
                            const CameraModel& cam, const ScaleEstimate& scale, const NavConfig& cfg);

/// Rotate to face the goal, translate, rotate to the target heading; each
/// part rounded to the nearest 15 deg / 0.25 m quantum (ties toward zero).
/// Bearings beyond backward_bearing_deg reverse instead. A translation that
/// rounds to zero collapses both turns into one.
/// `rel` is the target camera pose in the current camera frame, chunk units.
/// Throws PlanRejected when the metric distance exceeds max_step_translation.
ActionPlan generate_actions(const Pose& rel, const ScaleEstimate& scale, const NavConfig& cfg);

/// Nearest multiple of `quantum`, ties toward zero.
long quantize(double value, double quantum);

enum class SessionMode { Auto, Paused, Intervention };
enum class StepOutcome { Advanced, Acted, Retried, InterventionRequested, GoalReached };

std::string_view to_string(SessionMode m);
std::string_view to_string(StepOutcome o);

struct SessionCounters {
  std::size_t steps = 0;
  std::size_t robot_actions = 0;
  std::size_t interventions = 0;
  std::size_t intervention_actions = 0;
  std::size_t intervention_requests = 0;
  std::size_t action_calls = 0;  // every apply_action, robot or human
};

struct StepRecord {
  std::size_t step = 0;
  FrameId target;
  StepOutcome outcome = StepOutcome::Retried;
  std::optional<LocalizationResult> localization;
  std::optional<ActionPlan> plan;
  std::vector<Action> actions;
  std::vector<PlanarPose> poses;  // after each action
  PlanarPose pose_after;
};

struct InterventionRecord {
  std::size_t after_step = 0;
  std::vector<Action> nudges;
  std::vector<PlanarPose> poses;
  std::size_t new_target_index = 0;
  FrameId new_target;
};

/// One navigation run. Strictly single-threaded; the world and graph are
/// shared read-only.
class NavSession {
 public:
  NavSession(std::shared_ptr<const World> world, std::shared_ptr<const SceneGraph> graph, Rig rig, NavConfig cfg,
             NoiseConfig noise, std::uint64_t seed, PlannedPath path, AgentState start);

  /// One observe-localize-act iteration. Throws InvalidSession unless the
  /// session is in auto mode.
  StepRecord step();

  void pause();
  /// Executes an operator action; allowed in paused or intervention mode.
  PlanarPose nudge(Action a);
  /// Back to auto. After an intervention (or nudges during a pause) the
  /// target is re-selected by retrieval over the path frames.
  std::optional<InterventionRecord> resume();
  /// nudge() each action, then resume().
  InterventionRecord apply_intervention(const std::vector<Action>& nudges);

  /// Index of the path frame most similar to what the camera sees now.
  std::size_t relocalize_on_path();

  SessionMode mode() const { return mode_; }
  bool goal_reached() const { return goal_reached_; }
  const AgentState& agent() const { return agent_; }
  /// Test hook: place the agent somewhere without counting an action.
  void teleport(const AgentState& s);
  const PlannedPath& path() const { return path_; }
  std::size_t target_index() const { return target_index_; }
  void set_target_index(std::size_t i);
  const FrameId& target() const { return path_.frames.at(target_index_); }
  const SessionCounters& counters() const { return counters_; }
  const std::vector<PlanarPose>& trace() const { return trace_; }
  const std::vector<StepRecord>& steps() const { return records_; }
  const std::vector<InterventionRecord>& interventions() const { return intervention_log_; }
  const SceneGraph& graph() const { return *graph_; }
  const World& world() const { return *world_; }
  const Rig& rig() const { return rig_; }
  const NavConfig& config() const { return cfg_; }
  const ScaleEstimate& scale_for(const FrameId& f);
  FrameObservation observe_now();
  /// What the camera saw during the latest step.
  const FrameObservation& last_observation() const { return last_obs_; }

  RunTrace run_trace() const;

 private:
  LocalizationResult localize_against(const FrameId& f, const FrameObservation& obs);
  void execute(Action a, bool by_robot, std::vector<PlanarPose>* poses);

  std::shared_ptr<const World> world_;
  std::shared_ptr<const SceneGraph> graph_;
  Rig rig_;
  NavConfig cfg_;
  NoiseConfig noise_;
  std::uint64_t seed_;
  PlannedPath path_;
  AgentState agent_;
  double start_time_ = 0.0;
  std::size_t target_index_ = 0;
  SessionMode mode_ = SessionMode::Auto;
  bool goal_reached_ = false;
  bool nudged_while_paused_ = false;
  int failures_ = 0;
  std::uint64_t obs_counter_ = 0;
  std::uint64_t action_counter_ = 0;
  std::uint64_t loc_counter_ = 0;
  SessionCounters counters_;
  std::vector<PlanarPose> trace_;
  std::vector<StepRecord> records_;
  FrameObservation last_obs_;
  std::vector<InterventionRecord> intervention_log_;
  std::vector<Action> pending_nudges_;
  std::vector<PlanarPose> pending_poses_;
  std::map<std::size_t, ScaleEstimate> scales_;
};

PlanarPose planar(const AgentState& s);

/// Metrics of a finished (or aborted) session against its planned path's
/// ground-truth poses.
RunMetrics evaluate_run(const NavSession& session);

/// Open-loop baseline: the taught actions re-executed under actuation noise,
/// scored against the taught poses.
RunMetrics evaluate_replay(const ExplorationLog& log, const ActuationNoise& noise, std::uint64_t seed);

}  // namespace vnav
