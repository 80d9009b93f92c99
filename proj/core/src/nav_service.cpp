#include "vnav/nav_service.hpp"

#include <atomic>

#include "vnav/error.hpp"
#include "vnav/rng.hpp"

namespace vnav {
namespace {

constexpr std::uint64_t kInitialLocalizationTag = 0x494e4954ULL;

json detections_payload(const FrameObservation& obs) {
  json out = json::array();
  for (const auto& d : obs.detections) out.push_back({d.pixel.u, d.pixel.v, d.is_ground ? 1 : 0});
  return out;
}

json plan_json(const ActionPlan& p) {
  return {{"theta1", p.theta1}, {"distance", p.distance}, {"theta2", p.theta2}, {"actions", p.actions}};
}

std::string command_name(CommandKind k) {
  switch (k) {
    case CommandKind::Pause: return "pause";
    case CommandKind::Nudge: return "nudge";
    case CommandKind::Resume: return "resume";
    case CommandKind::Abort: return "abort";
  }
  return "?";
}

}  // namespace

std::string_view to_string(OperatorPolicy p) {
  switch (p) {
    case OperatorPolicy::Relocalize: return "relocalize";
    case OperatorPolicy::Abort: return "abort";
    case OperatorPolicy::Wait: return "wait";
  }
  return "?";
}

OperatorPolicy parse_policy(std::string_view s) {
  if (s == "relocalize") return OperatorPolicy::Relocalize;
  if (s == "abort") return OperatorPolicy::Abort;
  if (s == "wait") return OperatorPolicy::Wait;
  throw Error(ErrorCode::InvalidSpec, "unknown operator policy '" + std::string(s) + "'");
}

void to_json(json& j, const NavConfig& c) {
  j = {{"pos_reach_tol", c.pos_reach_tol},
       {"yaw_reach_tol_deg", c.yaw_reach_tol_deg},
       {"max_attempts_per_frame", c.max_attempts_per_frame},
       {"max_step_translation", c.max_step_translation},
       {"backward_bearing_deg", c.backward_bearing_deg},
       {"allow_skip", c.allow_skip},
       {"camera_height", c.camera_height},
       {"matcher", {{"max_descriptor_distance", c.matcher.max_descriptor_distance}}},
       {"pnp",
        {{"iterations", c.pnp.iterations},
         {"inlier_threshold", c.pnp.inlier_threshold},
         {"confidence", c.pnp.confidence},
         {"early_exit", c.pnp.early_exit}}}};
}

void from_json(const json& j, NavConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "pos_reach_tol") c.pos_reach_tol = v.get<double>();
    else if (key == "yaw_reach_tol_deg") c.yaw_reach_tol_deg = v.get<double>();
    else if (key == "max_attempts_per_frame") c.max_attempts_per_frame = v.get<int>();
    else if (key == "max_step_translation") c.max_step_translation = v.get<double>();
    else if (key == "backward_bearing_deg") c.backward_bearing_deg = v.get<double>();
    else if (key == "allow_skip") c.allow_skip = v.get<bool>();
    else if (key == "camera_height") c.camera_height = v.get<double>();
    else if (key == "matcher") c.matcher.max_descriptor_distance = v.value("max_descriptor_distance", c.matcher.max_descriptor_distance);
    else if (key == "pnp") {
      c.pnp.iterations = v.value("iterations", c.pnp.iterations);
      c.pnp.inlier_threshold = v.value("inlier_threshold", c.pnp.inlier_threshold);
      c.pnp.confidence = v.value("confidence", c.pnp.confidence);
      c.pnp.early_exit = v.value("early_exit", c.pnp.early_exit);
    } else {
      throw Error(ErrorCode::InvalidSpec, "unknown key '" + key + "' in nav config");
    }
  }
}

void to_json(json& j, const RunConfig& c) {
  j = {{"nav", c.nav},
       {"noise", c.noise},
       {"rig", c.rig},
       {"seed", c.seed},
       {"max_steps", c.max_steps},
       {"policy", std::string(to_string(c.policy))}};
}

void merge_run_config(const json& j, RunConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "nav") v.get_to(c.nav);
    else if (key == "noise") v.get_to(c.noise);
    else if (key == "rig") v.get_to(c.rig);
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "max_steps") c.max_steps = v.get<std::size_t>();
    else if (key == "policy") c.policy = parse_policy(v.get<std::string>());
    else throw Error(ErrorCode::InvalidSpec, "unknown key '" + key + "' in run config");
  }
}

FrameId resolve_frame(const SceneGraph& graph, const std::string& text) {
  const auto colon = text.find(':');
  if (colon != std::string::npos && text.substr(colon + 1) == "last") {
    const FrameId probe = FrameId::parse(text.substr(0, colon) + ":0");
    std::optional<FrameId> last;
    for (const auto& f : graph.frames()) {
      if (f.trajectory == probe.trajectory) last = f;
    }
    if (!last) throw Error(ErrorCode::GoalNotFound, "trajectory " + text.substr(0, colon) + " not in graph");
    return *last;
  }
  return FrameId::parse(text);
}

StartSpec parse_start(const SceneGraph& graph, const std::string& s) {
  StartSpec out;
  if (s != "auto") out.frame = resolve_frame(graph, s);
  return out;
}

std::unique_ptr<NavSession> open_session(std::shared_ptr<const World> world,
                                         std::shared_ptr<const SceneGraph> graph, const StartSpec& start,
                                         const FrameId& goal, const RunConfig& cfg) {
  if (!graph->contains(goal)) throw Error(ErrorCode::GoalNotFound, "goal frame " + goal.str() + " not in graph");
  cfg.nav.validate();
  cfg.noise.validate();
  cfg.rig.camera.validate();

  FrameId start_frame;
  Pose body;
  if (start.frame) {
    if (!graph->contains(*start.frame)) {
      throw Error(ErrorCode::InvalidSpec, "start frame " + start.frame->str() + " not in graph");
    }
    start_frame = *start.frame;
    const auto& kf = graph->keyframe(start_frame);
    body = start.pose ? *start.pose : Pose::planar(kf.world_position_gt.x(), kf.world_position_gt.y(), kf.world_yaw_gt);
  } else {
    if (!start.pose) throw Error(ErrorCode::InvalidSpec, "an automatic start needs the agent pose");
    body = *start.pose;
    AgentState st{body, 0.0};
    const auto obs = observe(*world, st, cfg.rig, cfg.noise, derive_seed(cfg.seed, kInitialLocalizationTag));
    const auto nn = graph->index().knn(describe_frame(obs), 1);
    if (nn.empty()) throw Error(ErrorCode::InvalidSession, "graph has an empty index");
    start_frame = nn.front().frame;
  }
  PlannedPath path = plan_path(*graph, start_frame, goal);
  auto session = std::make_unique<NavSession>(std::move(world), std::move(graph), cfg.rig, cfg.nav, cfg.noise,
                                              cfg.seed, std::move(path), AgentState{body, 0.0});
  session->pause();
  return session;
}

SessionRunner::SessionRunner(std::unique_ptr<NavSession> session, RunConfig cfg, Sink sink, std::ostream* run_log,
                             const json& header_extra)
    : session_(std::move(session)), cfg_(std::move(cfg)), sink_(std::move(sink)), log_(run_log) {
  log_.header(*session_, cfg_.seed, header_extra);
  send("plan_set", plan_payload());
  send("state_update", state_payload());
}

void SessionRunner::send(const std::string& kind, const json& payload) {
  if (sink_) sink_(kind, payload);
}

json SessionRunner::plan_payload() const {
  const auto& s = *session_;
  const RunTrace t = s.run_trace();
  json corridors = json::array();
  for (const auto& c : s.world().spec().corridors) corridors.push_back(c);
  json teach = json::object();
  for (const auto& chunk : s.graph().chunks()) {
    auto& list = teach[std::to_string(chunk.trajectory_id)];
    for (const auto& kf : chunk.keyframes) {
      list.push_back(json::array({kf.world_position_gt.x(), kf.world_position_gt.y()}));
    }
  }
  return {{"path", s.path().frames},
          {"cost", s.path().total_cost},
          {"start", s.path().frames.front()},
          {"goal", s.path().frames.back()},
          {"goal_position", json::array({t.goal_position.x(), t.goal_position.y()})},
          {"reference", t.reference},
          {"corridors", corridors},
          {"teach", teach}};
}

json SessionRunner::state_payload(const std::optional<OperatorCommand>& ack, bool accepted,
                                  const std::string& outcome) const {
  const auto& s = *session_;
  json j = {{"mode", std::string(to_string(s.mode()))},
            {"status", std::string(to_string(status_))},
            {"step", s.counters().steps},
            {"target", s.target()},
            {"target_index", s.target_index()},
            {"path_length", s.path().frames.size()},
            {"goal", s.path().frames.back()},
            {"goal_reached", s.goal_reached()},
            {"pose", planar(s.agent())},
            {"elapsed_s", s.run_trace().elapsed_s},
            {"counters", counters_json(s.counters())}};
  if (!outcome.empty()) j["outcome"] = outcome;
  if (!s.steps().empty() && s.steps().back().plan) j["last_plan"] = plan_json(*s.steps().back().plan);
  if (ack) {
    j["ack"] = {{"kind", command_name(ack->kind)}, {"accepted", accepted}};
    if (ack->seq) j["ack"]["seq"] = *ack->seq;
    if (ack->action) j["ack"]["action"] = *ack->action;
  }
  return j;
}

void SessionRunner::enqueue(OperatorCommand c) { queue_.push_back(std::move(c)); }

void SessionRunner::apply(const OperatorCommand& c) {
  auto& s = *session_;
  const std::size_t after = s.counters().steps;
  switch (c.kind) {
    case CommandKind::Pause:
      s.pause();
      log_.command("pause", c.source, after);
      send("state_update", state_payload(c));
      return;
    case CommandKind::Nudge: {
      if (s.mode() == SessionMode::Auto || !c.action) {
        send("error", {{"code", "InvalidSession"},
                       {"message", c.action ? "nudges need paused or intervention mode" : "nudge without an action"},
                       {"ref_seq", c.seq ? json(*c.seq) : json(nullptr)}});
        send("state_update", state_payload(c, false));
        return;
      }
      const PlanarPose p = s.nudge(*c.action);
      log_.command("nudge", c.source, after, c.action, p);
      send("state_update", state_payload(c));
      return;
    }
    case CommandKind::Resume: {
      log_.command("resume", c.source, after);
      if (auto rec = s.resume()) log_.intervention(*rec);
      send("state_update", state_payload(c));
      return;
    }
    case CommandKind::Abort:
      log_.command("abort", c.source, after);
      send("state_update", state_payload(c));
      finish(RunStatus::Aborted);
      return;
  }
}

void SessionRunner::finish(RunStatus st) {
  status_ = st;
  metrics_ = evaluate_run(*session_);
  log_.end(st, *session_, *metrics_);
  send("metrics", {{"status", std::string(to_string(st))},
                   {"metrics", *metrics_},
                   {"csv_header", metrics_csv_header()},
                   {"csv", metrics_csv_row(*metrics_)}});
  send("state_update", state_payload());
}

SessionRunner::Tick SessionRunner::tick() {
  if (finished()) return Tick::Finished;
  while (!queue_.empty() && !finished()) {
    const OperatorCommand c = std::move(queue_.front());
    queue_.pop_front();
    apply(c);
  }
  if (finished()) return Tick::Finished;

  auto& s = *session_;
  if (s.mode() == SessionMode::Intervention) {
    if (cfg_.policy == OperatorPolicy::Relocalize) {
      apply({CommandKind::Resume, std::nullopt, std::nullopt, "policy"});
    } else if (cfg_.policy == OperatorPolicy::Abort) {
      finish(RunStatus::Aborted);
      return Tick::Finished;
    }
  }
  if (s.mode() != SessionMode::Auto) return Tick::Waiting;
  if (s.counters().steps >= cfg_.max_steps) {
    finish(RunStatus::BudgetExceeded);
    return Tick::Finished;
  }

  const StepRecord rec = s.step();
  log_.step(rec, s.agent().time);
  if (rec.localization) {
    const auto& loc = *rec.localization;
    send("frame_match", {{"step", rec.step},
                         {"target", rec.target},
                         {"accepted", loc.accepted},
                         {"matches", loc.matches},
                         {"inliers", loc.inliers},
                         {"mean_reproj_error", loc.mean_reproj_error},
                         {"translation_m", loc.metric_translation},
                         {"reason", loc.reason},
                         {"live", detections_payload(s.last_observation())},
                         {"target_detections", detections_payload(s.graph().keyframe(rec.target).observation)}});
  }
  send("state_update", state_payload(std::nullopt, true, std::string(to_string(rec.outcome))));
  if (s.goal_reached()) {
    finish(RunStatus::GoalReached);
    return Tick::Finished;
  }
  return Tick::Stepped;
}

RunStatus SessionRunner::run_to_end() {
  for (;;) {
    const Tick t = tick();
    if (t == Tick::Finished) return status_;
    if (t == Tick::Waiting && queue_.empty()) {
      finish(RunStatus::Aborted);
      return status_;
    }
  }
}

ServiceConnection::ServiceConnection(ServiceOptions opts, LineSink out) : opts_(std::move(opts)), out_(std::move(out)) {}

ServiceConnection::~ServiceConnection() = default;

void ServiceConnection::on_line(const std::string& line) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_) return;
    inbox_.push_back(line);
  }
  cv_.notify_all();
}

void ServiceConnection::close() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool ServiceConnection::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

void ServiceConnection::wait_for_input(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !inbox_.empty(); });
}

void ServiceConnection::send(const std::string& kind, const json& payload) {
  json msg = {{"kind", kind}, {"seq", out_seq_++}, {"payload", payload}};
  if (!session_id_.empty()) msg["session"] = session_id_;
  if (out_) out_(msg.dump());
}

void ServiceConnection::send_error(const std::string& code, const std::string& message,
                                   std::optional<std::uint64_t> ref) {
  send("error", {{"code", code}, {"message", message}, {"ref_seq", ref ? json(*ref) : json(nullptr)}});
}

SessionRunner::Tick ServiceConnection::advance() {
  std::deque<std::string> batch;
  {
    std::lock_guard<std::mutex> lock(mu_);
    batch.swap(inbox_);
  }
  for (const auto& line : batch) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::parse_error& e) {
      send_error("BadMessage", e.what(), std::nullopt);
      continue;
    }
    handle(msg);
  }
  if (!runner_) return SessionRunner::Tick::Waiting;
  try {
    return runner_->tick();
  } catch (const Error& e) {
    send_error(std::string(to_string(e.code())), e.detail(), std::nullopt);
    close();
    return SessionRunner::Tick::Finished;
  }
}

void ServiceConnection::handle(const json& msg) {
  if (!msg.is_object() || !msg.contains("kind") || !msg["kind"].is_string() || !msg.contains("seq") ||
      !msg["seq"].is_number_unsigned()) {
    send_error("BadMessage", "messages need a string kind and an unsigned seq", std::nullopt);
    return;
  }
  const auto kind = msg["kind"].get<std::string>();
  const auto seq = msg["seq"].get<std::uint64_t>();
  if (last_in_seq_ && seq <= *last_in_seq_) {
    send_error("BadSequence", "inbound seq must increase; got " + std::to_string(seq), seq);
    return;
  }
  last_in_seq_ = seq;
  const json payload = msg.value("payload", json::object());

  if (!hello_done_) {
    if (kind != "hello") {
      send_error("BadMessage", "expected hello first", seq);
      return;
    }
    if (payload.value("schema", -1) != kProtocolSchema) {
      send_error("SchemaMismatch", "server speaks schema " + std::to_string(kProtocolSchema), seq);
      close();
      return;
    }
    hello_done_ = true;
    send("hello", {{"schema", kProtocolSchema}, {"server", "vnav"}});
    return;
  }

  try {
    if (kind == "open") {
      if (runner_) {
        send_error("BadMessage", "session already open", seq);
        return;
      }
      handle_open(payload);
    } else if (kind == "pause" || kind == "resume" || kind == "nudge") {
      if (!runner_) {
        send_error("NoSession", "open a session first", seq);
        return;
      }
      OperatorCommand c;
      c.seq = seq;
      if (kind == "pause") {
        c.kind = CommandKind::Pause;
      } else if (kind == "resume") {
        c.kind = CommandKind::Resume;
      } else {
        c.kind = CommandKind::Nudge;
        if (payload.contains("action")) c.action = payload["action"].get<Action>();
      }
      runner_->enqueue(std::move(c));
    } else if (kind == "close") {
      if (runner_ && !runner_->finished()) {
        runner_->enqueue({CommandKind::Abort, std::nullopt, seq, "operator"});
        runner_->tick();
      }
      close();
    } else {
      send_error("BadMessage", "unknown kind '" + kind + "'", seq);
    }
  } catch (const Error& e) {
    send_error(std::string(to_string(e.code())), e.detail(), seq);
  } catch (const json::exception& e) {
    send_error("BadMessage", e.what(), seq);
  }
}

void ServiceConnection::handle_open(const json& payload) {
  static std::atomic<std::uint64_t> next_id{1};
  const std::filesystem::path world_file = payload.value("world", opts_.world_file.string());
  const std::filesystem::path graph_file = payload.value("graph", opts_.graph_file.string());
  RunConfig cfg = opts_.defaults;
  if (payload.contains("config")) merge_run_config(payload["config"], cfg);
  if (!payload.contains("goal")) throw Error(ErrorCode::InvalidSpec, "open needs a goal frame");
  auto world = std::make_shared<const World>(load_world(world_file));
  auto graph = std::make_shared<const SceneGraph>(load_graph(graph_file));
  const FrameId goal = resolve_frame(*graph, payload["goal"].get<std::string>());
  StartSpec start = parse_start(*graph, payload.value("start", std::string("auto")));
  if (payload.contains("start_pose")) start.pose = payload["start_pose"].get<Pose>();
  auto session = open_session(world, graph, start, goal, cfg);

  session_id_ = "s" + std::to_string(next_id++);
  step_delay_ms_ = payload.value("step_delay_ms", 0);
  std::ostream* log_stream = nullptr;
  if (!opts_.run_log_dir.empty()) {
    std::filesystem::create_directories(opts_.run_log_dir);
    run_log_file_ = std::make_unique<std::ofstream>(opts_.run_log_dir / (session_id_ + ".jsonl"));
    log_stream = run_log_file_.get();
  }
  runner_ = std::make_unique<SessionRunner>(
      std::move(session), cfg, [this](const std::string& k, const json& p) { send(k, p); }, log_stream);
  if (payload.value("autostart", false)) runner_->enqueue({CommandKind::Resume, std::nullopt, std::nullopt, "start"});
}

}  // namespace vnav
