#include "vnav/sim_world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vnav/error.hpp"
#include "vnav/rng.hpp"

namespace vnav {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Forward: return "forward";
    case Action::Backward: return "backward";
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
  }
  return "?";
}

Action parse_action(std::string_view s) {
  if (s == "forward" || s == "F") return Action::Forward;
  if (s == "backward" || s == "B") return Action::Backward;
  if (s == "turn_left" || s == "L") return Action::TurnLeft;
  if (s == "turn_right" || s == "R") return Action::TurnRight;
  throw Error(ErrorCode::InvalidSpec, "unknown action '" + std::string(s) + "'");
}

namespace {

Descriptor random_descriptor(Rng& rng, std::size_t dim) {
  Descriptor d(dim);
  for (auto& v : d) v = static_cast<float>(rng.normal());
  normalize(d);
  return d;
}

void jitter_descriptor(Descriptor& d, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  for (auto& v : d) v = static_cast<float>(v + rng.normal(0.0, sigma));
  normalize(d);
}

}  // namespace

World::World(std::uint64_t seed, WorldSpec spec, std::vector<Landmark> landmarks)
    : seed_(seed), spec_(std::move(spec)), landmarks_(std::move(landmarks)) {
  for (std::size_t i = 0; i < landmarks_.size(); ++i) {
    const auto& p = landmarks_[i].position;
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() / cell_));
    const auto iy = static_cast<std::int64_t>(std::floor(p.y() / cell_));
    grid_[cell_key(ix, iy)].push_back(i);
  }
}

bool World::contains(const Vec2& p) const {
  return p.x() >= spec_.extent_min.x() && p.x() <= spec_.extent_max.x() && p.y() >= spec_.extent_min.y() &&
         p.y() <= spec_.extent_max.y();
}

std::vector<std::size_t> World::landmarks_near(const Vec3& center, double radius) const {
  std::vector<std::size_t> out;
  const auto x0 = static_cast<std::int64_t>(std::floor((center.x() - radius) / cell_));
  const auto x1 = static_cast<std::int64_t>(std::floor((center.x() + radius) / cell_));
  const auto y0 = static_cast<std::int64_t>(std::floor((center.y() - radius) / cell_));
  const auto y1 = static_cast<std::int64_t>(std::floor((center.y() + radius) / cell_));
  const double r2 = radius * radius;
  for (auto ix = x0; ix <= x1; ++ix) {
    for (auto iy = y0; iy <= y1; ++iy) {
      const auto it = grid_.find(cell_key(ix, iy));
      if (it == grid_.end()) continue;
      for (auto id : it->second) {
        const Vec3& p = landmarks_[id].position;
        const double dx = p.x() - center.x();
        const double dy = p.y() - center.y();
        if (dx * dx + dy * dy <= r2) out.push_back(id);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t World::digest() const {
  FrameObservation as_obs;
  as_obs.detections.reserve(landmarks_.size());
  for (std::size_t i = 0; i < landmarks_.size(); ++i) {
    const auto& l = landmarks_[i];
    Detection d;
    d.pixel = {l.position.x(), l.position.y()};
    d.depth = l.position.z();
    d.descriptor = l.descriptor;
    d.is_ground = l.is_ground;
    d.landmark_id = static_cast<std::int64_t>(i);
    as_obs.detections.push_back(std::move(d));
  }
  return vnav::digest(as_obs) ^ mix64(seed_);
}

World generate_world(std::uint64_t seed, const WorldSpec& spec) {
  const Vec2 size = spec.extent_max - spec.extent_min;
  if (!(size.x() > 0.0) || !(size.y() > 0.0)) throw Error(ErrorCode::InvalidSpec, "world extent has zero area");
  if (!(spec.landmark_density > 0.0)) throw Error(ErrorCode::InvalidSpec, "landmark density must be positive");
  if (spec.descriptor_dim == 0) throw Error(ErrorCode::InvalidSpec, "descriptor dimension must be positive");

  Rng rng(seed, 0x574f524cULL);
  std::vector<Landmark> landmarks;
  for (const auto& corridor : spec.corridors) {
    for (std::size_t s = 0; s + 1 < corridor.waypoints.size(); ++s) {
      const Vec2 a = corridor.waypoints[s];
      const Vec2 b = corridor.waypoints[s + 1];
      const double len = (b - a).norm();
      if (len <= 0.0) continue;
      const Vec2 dir = (b - a) / len;
      const Vec2 left(-dir.y(), dir.x());
      const double half = 0.5 * corridor.width;

      // Segments run past their endpoints so corners and dead ends stay textured.
      const double ext = half + spec.structure_band_far;
      const double span = len + 2.0 * ext;
      const auto n_ground = static_cast<std::size_t>(
          std::llround(spec.ground_per_m2 * spec.landmark_density * span * corridor.width));
      for (std::size_t i = 0; i < n_ground; ++i) {
        const Vec2 p = a + dir * rng.uniform(-ext, len + ext) + left * rng.uniform(-half, half);
        landmarks.push_back({Vec3(p.x(), p.y(), 0.0), random_descriptor(rng, spec.descriptor_dim), true});
      }
      const double band = spec.structure_band_far - spec.structure_band_near;
      const auto n_side = static_cast<std::size_t>(
          std::llround(spec.structure_per_m2 * spec.landmark_density * span * band));
      for (int side : {-1, 1}) {
        for (std::size_t i = 0; i < n_side; ++i) {
          const double lateral = side * (half + rng.uniform(spec.structure_band_near, spec.structure_band_far));
          const Vec2 p = a + dir * rng.uniform(-ext, len + ext) + left * lateral;
          const double z = rng.uniform(spec.structure_z_min, spec.structure_z_max);
          landmarks.push_back({Vec3(p.x(), p.y(), z), random_descriptor(rng, spec.descriptor_dim), false});
        }
      }
      // End walls close off the corridor's first and last waypoints.
      const bool first = s == 0;
      const bool last = s + 2 == corridor.waypoints.size();
      const auto n_wall = static_cast<std::size_t>(
          std::llround(spec.structure_per_m2 * spec.landmark_density * 2.0 * ext * band));
      for (int end : {-1, 1}) {
        if ((end < 0 && !first) || (end > 0 && !last)) continue;
        const Vec2 base = end < 0 ? a : b;
        for (std::size_t i = 0; i < n_wall; ++i) {
          const double along = end * (half + rng.uniform(spec.structure_band_near, spec.structure_band_far));
          const Vec2 p = base + dir * along + left * rng.uniform(-ext, ext);
          const double z = rng.uniform(spec.structure_z_min, spec.structure_z_max);
          landmarks.push_back({Vec3(p.x(), p.y(), z), random_descriptor(rng, spec.descriptor_dim), false});
        }
      }
    }
  }
  return World(seed, spec, std::move(landmarks));
}

NoiseConfig NoiseConfig::defaults() {
  NoiseConfig n;
  n.pixel_sigma = 0.5;
  n.descriptor_sigma = 0.05;
  n.outlier_rate = 0.2;
  n.dropout_rate = 0.1;
  n.actuation.distance_sigma = 0.02;
  n.actuation.heading_sigma = deg2rad(1.0);
  n.actuation.turn_sigma = deg2rad(1.5);
  n.ground_mislabel_rate = 0.05;
  return n;
}

void NoiseConfig::validate() const {
  const auto rate_ok = [](double r) { return r >= 0.0 && r < 1.0; };
  if (pixel_sigma < 0.0 || descriptor_sigma < 0.0 || actuation.distance_sigma < 0.0 ||
      actuation.heading_sigma < 0.0 || actuation.turn_sigma < 0.0 || !(actuation.step_multiplier > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "noise magnitudes must be nonnegative");
  }
  // dropout may be exactly 1 to force empty observations
  if (!rate_ok(outlier_rate) || !(dropout_rate >= 0.0 && dropout_rate <= 1.0) || !rate_ok(ground_mislabel_rate)) {
    throw Error(ErrorCode::InvalidSpec, "noise rates must lie in [0, 1)");
  }
}

AgentState apply_action(const AgentState& state, Action action, const ActuationNoise& noise, std::uint64_t seed) {
  Rng rng(seed, 0x414354ULL);
  const Vec3& t = state.pose.translation;
  double x = t.x();
  double y = t.y();
  double yaw = yaw_of(state.pose);
  const double turn = deg2rad(kTurnDegrees);
  switch (action) {
    case Action::Forward:
    case Action::Backward: {
      if (noise.heading_sigma > 0.0) yaw = wrap_angle(yaw + rng.normal(0.0, noise.heading_sigma));
      double d = kStepMeters * noise.step_multiplier;
      if (noise.distance_sigma > 0.0) d += rng.normal(0.0, noise.distance_sigma);
      if (action == Action::Backward) d = -d;
      x += d * std::cos(yaw);
      y += d * std::sin(yaw);
      break;
    }
    case Action::TurnLeft:
    case Action::TurnRight: {
      double delta = action == Action::TurnLeft ? turn : -turn;
      if (noise.turn_sigma > 0.0) delta += rng.normal(0.0, noise.turn_sigma);
      yaw = wrap_angle(yaw + delta);
      break;
    }
  }
  AgentState out;
  out.pose = Pose::planar(x, y, yaw, t.z());
  out.time = state.time + kActionSeconds;
  return out;
}

FrameObservation observe(const World& world, const AgentState& agent, const Rig& rig, const NoiseConfig& noise,
                         std::uint64_t seed) {
  const Pose cam_pose = rig.camera_pose(agent.pose);
  const auto& spec = world.spec();
  const auto& cam = rig.camera;
  const Eigen::Quaterniond to_cam = cam_pose.rotation.conjugate();

  std::vector<Detection> visible;
  for (auto id : world.landmarks_near(cam_pose.translation, spec.max_range)) {
    const auto& lm = world.landmarks()[id];
    const Vec3 rel = lm.position - cam_pose.translation;
    const double range = rel.norm();
    if (range > (lm.is_ground ? spec.ground_range : spec.max_range)) continue;
    const Vec3 pc = to_cam * rel;
    const auto px = project_camera(cam, pc);
    if (!px || !cam.in_bounds(*px)) continue;
    Detection d;
    d.pixel = *px;
    d.depth = pc.x();
    d.descriptor = lm.descriptor;
    d.is_ground = lm.is_ground;
    d.landmark_id = static_cast<std::int64_t>(id);
    visible.push_back(std::move(d));
  }

  Rng rng(seed, 0x4f4253ULL);
  FrameObservation obs;
  obs.detections.reserve(visible.size());
  for (const auto& v : visible) {
    if (noise.dropout_rate > 0.0 && rng.bernoulli(noise.dropout_rate)) continue;
    Detection d = v;
    if (noise.pixel_sigma > 0.0) {
      d.pixel.u += rng.normal(0.0, noise.pixel_sigma);
      d.pixel.v += rng.normal(0.0, noise.pixel_sigma);
      if (!cam.in_bounds(d.pixel)) continue;
    }
    jitter_descriptor(d.descriptor, noise.descriptor_sigma, rng);
    obs.detections.push_back(std::move(d));
  }

  if (noise.outlier_rate > 0.0) {
    const double expected = noise.outlier_rate / (1.0 - noise.outlier_rate) * double(visible.size());
    auto count = static_cast<std::size_t>(std::floor(expected));
    if (rng.bernoulli(expected - double(count))) ++count;
    for (std::size_t i = 0; i < count; ++i) {
      Detection d;
      d.pixel = {rng.uniform(0.0, cam.width), rng.uniform(0.0, cam.height)};
      d.depth = rng.uniform(0.5, spec.max_range);
      if (!visible.empty()) {
        d.descriptor = visible[rng.below(visible.size())].descriptor;
        jitter_descriptor(d.descriptor, noise.descriptor_sigma, rng);
      } else {
        d.descriptor = random_descriptor(rng, spec.descriptor_dim);
      }
      d.is_ground = false;
      d.landmark_id = kSpuriousLandmark;
      obs.detections.push_back(std::move(d));
    }
  }

  if (noise.ground_mislabel_rate > 0.0) {
    for (auto& d : obs.detections) {
      if (rng.bernoulli(noise.ground_mislabel_rate)) d.is_ground = !d.is_ground;
    }
  }
  return obs;
}

std::uint64_t observation_seed_for(std::uint64_t log_seed, std::size_t index) {
  return derive_seed(log_seed, 0x4c4f47000000ULL + index);
}

ExplorationLog record_exploration(const World& world, const std::vector<Vec2>& waypoints, const Rig& rig,
                                  const ExploreOptions& opts) {
  if (waypoints.empty()) throw Error(ErrorCode::RecordingFailed, "no waypoints");
  for (const auto& w : waypoints) {
    if (!world.contains(w)) throw Error(ErrorCode::RecordingFailed, "waypoint outside the world extent");
  }
  opts.observation_noise.validate();

  ExplorationLog log;
  log.trajectory_id = opts.trajectory_id;
  log.rig = rig;
  log.observation_noise = opts.observation_noise;
  log.observation_seed = opts.observation_seed;

  double yaw0 = 0.0;
  if (opts.initial_yaw) {
    yaw0 = *opts.initial_yaw;
  } else if (waypoints.size() > 1) {
    const Vec2 d = waypoints[1] - waypoints[0];
    yaw0 = std::atan2(d.y(), d.x());
  }
  AgentState state;
  state.pose = Pose::planar(waypoints[0].x(), waypoints[0].y(), wrap_angle(yaw0));

  const ActuationNoise exact{};
  const auto push = [&](std::optional<Action> a) {
    if (a) state = apply_action(state, *a, exact, 0);
    if (log.entries.size() > opts.max_actions) throw Error(ErrorCode::RecordingFailed, "action budget exhausted");
    LogEntry e;
    e.timestamp = state.time;
    e.action = a;
    e.pose = state.pose;
    e.observation = observe(world, state, rig, opts.observation_noise,
                            observation_seed_for(opts.observation_seed, log.entries.size()));
    log.entries.push_back(std::move(e));
  };

  push(std::nullopt);
  const double align_tol = deg2rad(0.5 * kTurnDegrees) + 1e-9;
  for (std::size_t w = 1; w < waypoints.size(); ++w) {
    if (opts.spin_at_junctions && w >= 2) {
      for (int i = 0; i < 360 / static_cast<int>(kTurnDegrees); ++i) push(Action::TurnLeft);
    }
    const Vec2 goal = waypoints[w];
    for (;;) {
      const Vec2 pos = state.position();
      const double dist = (goal - pos).norm();
      if (dist <= 0.5 * kStepMeters) break;
      const double bearing = std::atan2(goal.y() - pos.y(), goal.x() - pos.x());
      const double err = wrap_angle(bearing - state.yaw());
      if (std::abs(err) > align_tol) {
        push(err > 0.0 ? Action::TurnLeft : Action::TurnRight);
        continue;
      }
      const Vec2 ahead = pos + kStepMeters * Vec2(std::cos(state.yaw()), std::sin(state.yaw()));
      if ((goal - ahead).norm() >= dist) {
        if (dist <= 0.3) break;
        throw Error(ErrorCode::RecordingFailed, "waypoint cannot be approached");
      }
      push(Action::Forward);
    }
  }
  return log;
}

std::vector<AgentState> replay_actions(const ExplorationLog& log, const ActuationNoise& noise, std::uint64_t seed) {
  std::vector<AgentState> out;
  if (log.entries.empty()) return out;
  AgentState s;
  s.pose = log.entries.front().pose;
  s.time = log.entries.front().timestamp;
  out.push_back(s);
  std::uint64_t k = 0;
  for (const auto& e : log.entries) {
    if (!e.action) continue;
    s = apply_action(s, *e.action, noise, derive_seed(seed, k++));
    out.push_back(s);
  }
  return out;
}

}  // namespace vnav
