#include "vnav/nav_controller.hpp"

#include <cmath>
#include <numbers>

#include "vnav/error.hpp"
#include "vnav/rng.hpp"

namespace vnav {
namespace {

constexpr std::uint64_t kObsTag = 0x4f42530000000000ULL;
constexpr std::uint64_t kActTag = 0x4143540000000000ULL;
constexpr std::uint64_t kLocTag = 0x4c4f430000000000ULL;

void append_turns(std::vector<Action>& out, long n) {
  for (long i = 0; i < std::labs(n); ++i) out.push_back(n > 0 ? Action::TurnLeft : Action::TurnRight);
}

}  // namespace

void NavConfig::validate() const {
  if (!(pos_reach_tol > 0.0) || !(yaw_reach_tol_deg > 0.0) || max_attempts_per_frame < 1 ||
      !(max_step_translation > 0.0) || !(backward_bearing_deg > 0.0) || !(camera_height > 0.0) ||
      !(matcher.max_descriptor_distance > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "navigation config values must be positive");
  }
  pnp.validate();
}

std::string_view to_string(SessionMode m) {
  switch (m) {
    case SessionMode::Auto: return "auto";
    case SessionMode::Paused: return "paused";
    case SessionMode::Intervention: return "intervention";
  }
  return "?";
}

std::string_view to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::Advanced: return "advanced";
    case StepOutcome::Acted: return "acted";
    case StepOutcome::Retried: return "retried";
    case StepOutcome::InterventionRequested: return "intervention_requested";
    case StepOutcome::GoalReached: return "goal_reached";
  }
  return "?";
}

std::vector<Correspondence2D3D> match_to_target(const FrameObservation& obs, const Keyframe& target,
                                                const ChunkNode& chunk, const CameraModel& cam,
                                                const NavConfig& cfg) {
  const bool in_chunk = std::any_of(chunk.keyframes.begin(), chunk.keyframes.end(),
                                    [&](const Keyframe& k) { return k.frame_id == target.frame_id; });
  if (!in_chunk) throw Error(ErrorCode::InconsistentGraph, "target " + target.frame_id.str() + " is not in the chunk");

  const auto matches = match_mutual_nn(obs, target.observation, cfg.matcher);
  std::vector<Correspondence2D3D> corrs;
  corrs.reserve(matches.size());
  for (const auto& m : matches) {
    const Detection& q = obs.detections[m.query];
    const Detection& t = target.observation.detections[m.train];
    if (!(t.depth > 0.0)) continue;
    corrs.push_back({q.pixel, backproject(cam, target.pose_in_chunk, t.pixel, t.depth), q.landmark_id});
  }
  if (corrs.size() < kPnPMinimalSample) {
    throw Error(ErrorCode::InsufficientMatches, std::to_string(corrs.size()) + " matches");
  }
  return corrs;
}

LocalizationResult localize(const FrameObservation& obs, const Keyframe& target, const ChunkNode& chunk,
                            const CameraModel& cam, const ScaleEstimate& scale, const NavConfig& cfg) {
  LocalizationResult r;
  std::vector<Correspondence2D3D> corrs;
  try {
    corrs = match_to_target(obs, target, chunk, cam, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InsufficientMatches) throw;
    r.reason = "insufficient_matches";
    return r;
  }
  r.matches = corrs.size();
  PnPResult pnp;
  try {
    pnp = solve_pnp_ransac(corrs, cam, cfg.pnp);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::InsufficientData) throw;
    r.reason = "no_consensus";
    return r;
  }
  r.pose_in_chunk = pnp.pose;
  r.inliers = pnp.inlier_ids.size();
  r.mean_reproj_error = pnp.mean_reprojection_error;
  const Pose rel = relative(pnp.pose, target.pose_in_chunk);
  r.metric_translation = scale.scale * rel.translation.norm();
  if (!(r.metric_translation <= cfg.max_step_translation)) {
    r.reason = "translation_cap";
    return r;
  }
  r.accepted = true;
  return r;
}

long quantize(double value, double quantum) {
  const double q = value / quantum;
  const double mag = std::ceil(std::abs(q) - 0.5 - 1e-9);
  const long n = static_cast<long>(std::max(0.0, mag));
  return q < 0.0 ? -n : n;
}

ActionPlan generate_actions(const Pose& rel, const ScaleEstimate& scale, const NavConfig& cfg) {
  const double dx = scale.scale * rel.translation.x();
  const double dy = scale.scale * rel.translation.y();
  const double d = std::hypot(dx, dy);
  if (!std::isfinite(d)) throw Error(ErrorCode::PlanRejected, "non-finite relative pose");
  if (d > cfg.max_step_translation) {
    throw Error(ErrorCode::PlanRejected, "implied move of " + std::to_string(d) + " m exceeds the cap");
  }
  const double dyaw = yaw_of(rel);
  const double turn = deg2rad(kTurnDegrees);

  ActionPlan plan;
  double theta1 = d > 1e-12 ? std::atan2(dy, dx) : 0.0;
  double dist = d;
  if (std::abs(theta1) > deg2rad(cfg.backward_bearing_deg)) {
    theta1 = wrap_angle(theta1 - std::numbers::pi);
    dist = -d;
  }
  const long n_steps = quantize(dist, kStepMeters);
  if (n_steps == 0) theta1 = 0.0;
  const double theta2 = wrap_angle(dyaw - theta1);
  plan.theta1 = theta1;
  plan.distance = dist;
  plan.theta2 = theta2;

  append_turns(plan.actions, quantize(theta1, turn));
  for (long i = 0; i < std::labs(n_steps); ++i) {
    plan.actions.push_back(n_steps > 0 ? Action::Forward : Action::Backward);
  }
  append_turns(plan.actions, quantize(theta2, turn));
  return plan;
}

PlanarPose planar(const AgentState& s) { return {s.x(), s.y(), s.yaw()}; }

NavSession::NavSession(std::shared_ptr<const World> world, std::shared_ptr<const SceneGraph> graph, Rig rig,
                       NavConfig cfg, NoiseConfig noise, std::uint64_t seed, PlannedPath path, AgentState start)
    : world_(std::move(world)),
      graph_(std::move(graph)),
      rig_(std::move(rig)),
      cfg_(std::move(cfg)),
      noise_(noise),
      seed_(seed),
      path_(std::move(path)),
      agent_(start) {
  cfg_.validate();
  noise_.validate();
  if (path_.frames.empty()) throw Error(ErrorCode::InvalidSession, "session needs a nonempty path");
  for (const auto& f : path_.frames) {
    if (!graph_->contains(f)) throw Error(ErrorCode::InvalidSession, "path frame " + f.str() + " not in graph");
  }
  start_time_ = agent_.time;
  trace_.push_back(planar(agent_));
}

void NavSession::set_target_index(std::size_t i) {
  if (i >= path_.frames.size()) throw Error(ErrorCode::InvalidSession, "target index outside the path");
  target_index_ = i;
  failures_ = 0;
}

void NavSession::teleport(const AgentState& s) {
  agent_ = s;
  trace_.push_back(planar(agent_));
}

const ScaleEstimate& NavSession::scale_for(const FrameId& f) {
  const std::size_t ci = graph_->chunk_index_of(f);
  auto it = scales_.find(ci);
  if (it == scales_.end()) {
    RansacConfig plane = RansacConfig::plane_defaults();
    plane.seed = derive_seed(seed_, 0x504c4e00ULL + ci);
    it = scales_.emplace(ci, estimate_scale_or_fallback(graph_->chunks()[ci], rig_.camera, cfg_.camera_height, plane))
             .first;
  }
  return it->second;
}

FrameObservation NavSession::observe_now() {
  return observe(*world_, agent_, rig_, noise_, derive_seed(seed_, kObsTag + obs_counter_++));
}

LocalizationResult NavSession::localize_against(const FrameId& f, const FrameObservation& obs) {
  NavConfig cfg = cfg_;
  cfg.pnp.seed = derive_seed(seed_, kLocTag + loc_counter_++);
  const ScaleEstimate& scale = scale_for(f);
  return localize(obs, graph_->keyframe(f), graph_->chunk_of(f), rig_.camera, scale, cfg);
}

void NavSession::execute(Action a, bool by_robot, std::vector<PlanarPose>* poses) {
  agent_ = apply_action(agent_, a, noise_.actuation, derive_seed(seed_, kActTag + action_counter_++));
  ++counters_.action_calls;
  if (by_robot) {
    ++counters_.robot_actions;
  } else {
    ++counters_.intervention_actions;
  }
  trace_.push_back(planar(agent_));
  if (poses) poses->push_back(trace_.back());
}

StepRecord NavSession::step() {
  if (mode_ != SessionMode::Auto) throw Error(ErrorCode::InvalidSession, "step() requires auto mode");
  StepRecord rec;
  rec.step = counters_.steps++;
  rec.target = target();
  if (goal_reached_) {
    rec.outcome = StepOutcome::GoalReached;
    rec.pose_after = planar(agent_);
    records_.push_back(rec);
    return rec;
  }

  last_obs_ = observe_now();
  const FrameObservation& obs = last_obs_;
  LocalizationResult loc = localize_against(rec.target, obs);

  const Keyframe& kf = graph_->keyframe(rec.target);
  std::optional<Pose> rel;
  if (loc.accepted) {
    rel = relative(loc.pose_in_chunk, kf.pose_in_chunk);
    try {
      (void)yaw_of(*rel);
    } catch (const Error&) {
      loc.accepted = false;
      loc.reason = "degenerate_yaw";
      rel.reset();
    }
  }
  rec.localization = loc;

  if (loc.accepted) {
    failures_ = 0;
    const ScaleEstimate& scale = scale_for(rec.target);
    const double dist = scale.scale * rel->translation.head<2>().norm();
    const double dyaw = std::abs(rad2deg(yaw_of(*rel)));
    ActionPlan plan;
    bool reached = dist <= cfg_.pos_reach_tol && dyaw <= cfg_.yaw_reach_tol_deg;
    if (!reached) {
      plan = generate_actions(*rel, scale, cfg_);
      reached = plan.actions.empty();
    }
    if (reached) {
      if (target_index_ + 1 == path_.frames.size()) {
        goal_reached_ = true;
        rec.outcome = StepOutcome::GoalReached;
      } else {
        ++target_index_;
        rec.outcome = StepOutcome::Advanced;
      }
    } else {
      for (Action a : plan.actions) execute(a, true, &rec.poses);
      rec.actions = plan.actions;
      rec.plan = plan;
      rec.outcome = StepOutcome::Acted;
    }
  } else {
    ++failures_;
    bool skipped = false;
    if (cfg_.allow_skip && failures_ % 2 == 0 && target_index_ + 1 < path_.frames.size()) {
      const LocalizationResult next = localize_against(path_.frames[target_index_ + 1], obs);
      if (next.accepted) {
        ++target_index_;
        failures_ = 0;
        skipped = true;
        rec.outcome = StepOutcome::Advanced;
      }
    }
    if (!skipped) {
      if (failures_ >= cfg_.max_attempts_per_frame) {
        mode_ = SessionMode::Intervention;
        ++counters_.intervention_requests;
        rec.outcome = StepOutcome::InterventionRequested;
      } else {
        rec.outcome = StepOutcome::Retried;
      }
    }
  }
  rec.pose_after = planar(agent_);
  records_.push_back(rec);
  return rec;
}

void NavSession::pause() {
  if (mode_ == SessionMode::Auto) mode_ = SessionMode::Paused;
}

PlanarPose NavSession::nudge(Action a) {
  if (mode_ == SessionMode::Auto) throw Error(ErrorCode::InvalidSession, "nudges require paused or intervention mode");
  execute(a, false, &pending_poses_);
  pending_nudges_.push_back(a);
  return trace_.back();
}

std::size_t NavSession::relocalize_on_path() {
  if (path_.frames.empty()) throw Error(ErrorCode::InvalidSession, "empty path");
  const FrameObservation obs = observe_now();
  if (obs.empty()) return target_index_;
  const GlobalDescriptor q = describe_frame(obs);
  std::vector<DescriptorIndex::Entry> entries;
  entries.reserve(path_.frames.size());
  for (const auto& f : path_.frames) {
    const GlobalDescriptor* g = graph_->index().find(f);
    entries.push_back({f, g ? *g : describe_frame(graph_->keyframe(f).observation)});
  }
  const DescriptorIndex path_index(std::move(entries));
  const auto best = path_index.knn(q, 1);
  for (std::size_t i = 0; i < path_.frames.size(); ++i) {
    if (path_.frames[i] == best.front().frame) return i;
  }
  return target_index_;
}

std::optional<InterventionRecord> NavSession::resume() {
  if (mode_ == SessionMode::Auto) return std::nullopt;
  const bool intervened = mode_ == SessionMode::Intervention || nudged_while_paused_ || !pending_nudges_.empty();
  std::optional<InterventionRecord> out;
  if (intervened) {
    // An operator-initiated correction during a pause counts as its own
    // request, so interventions always equals resolved requests.
    if (mode_ == SessionMode::Paused) ++counters_.intervention_requests;
    InterventionRecord rec;
    rec.after_step = counters_.steps;
    rec.nudges = std::move(pending_nudges_);
    rec.poses = std::move(pending_poses_);
    if (!goal_reached_) {
      target_index_ = relocalize_on_path();
      failures_ = 0;
    }
    rec.new_target_index = target_index_;
    rec.new_target = target();
    ++counters_.interventions;
    intervention_log_.push_back(rec);
    out = std::move(rec);
  }
  pending_nudges_.clear();
  pending_poses_.clear();
  nudged_while_paused_ = false;
  mode_ = SessionMode::Auto;
  return out;
}

InterventionRecord NavSession::apply_intervention(const std::vector<Action>& nudges) {
  if (mode_ == SessionMode::Auto) throw Error(ErrorCode::InvalidSession, "intervention requires paused or intervention mode");
  for (Action a : nudges) nudge(a);
  nudged_while_paused_ = true;
  return *resume();
}

RunTrace NavSession::run_trace() const {
  RunTrace t;
  t.executed = trace_;
  for (const auto& f : path_.frames) {
    const auto& kf = graph_->keyframe(f);
    t.reference.push_back({kf.world_position_gt.x(), kf.world_position_gt.y(), kf.world_yaw_gt});
  }
  t.goal_position = graph_->keyframe(path_.frames.back()).world_position_gt;
  t.goal_declared = goal_reached_;
  t.interventions = counters_.interventions;
  t.intervention_actions = counters_.intervention_actions;
  t.robot_actions = counters_.robot_actions;
  t.elapsed_s = agent_.time - start_time_;
  return t;
}

RunMetrics evaluate_run(const NavSession& session) { return evaluate_trace(session.run_trace()); }

RunMetrics evaluate_replay(const ExplorationLog& log, const ActuationNoise& noise, std::uint64_t seed) {
  RunTrace t;
  const auto states = replay_actions(log, noise, seed);
  for (const auto& s : states) t.executed.push_back(planar(s));
  for (const auto& e : log.entries) {
    AgentState s;
    s.pose = e.pose;
    t.reference.push_back(planar(s));
  }
  if (!t.reference.empty()) t.goal_position = t.reference.back().position();
  t.goal_declared = true;
  t.robot_actions = states.empty() ? 0 : states.size() - 1;
  t.elapsed_s = states.empty() ? 0.0 : states.back().time - states.front().time;
  return evaluate_trace(t);
}

}  // namespace vnav
