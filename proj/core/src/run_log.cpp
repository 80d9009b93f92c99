#include "vnav/run_log.hpp"

#include <fstream>
#include <ostream>

#include "vnav/error.hpp"
#include "vnav/observation.hpp"
#include "vnav/rng.hpp"

namespace vnav {

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::GoalReached: return "goal_reached";
    case RunStatus::BudgetExceeded: return "budget_exceeded";
    case RunStatus::Aborted: return "aborted";
  }
  return "?";
}

std::uint64_t localization_digest(const LocalizationResult& loc) {
  // Reuse the observation digest over a pseudo detection list.
  FrameObservation obs;
  const auto& p = loc.pose_in_chunk;
  Detection a;
  a.pixel = {p.translation.x(), p.translation.y()};
  a.depth = p.translation.z();
  a.descriptor = {static_cast<float>(p.rotation.x()), static_cast<float>(p.rotation.y()),
                  static_cast<float>(p.rotation.z()), static_cast<float>(p.rotation.w())};
  a.landmark_id = static_cast<std::int64_t>(loc.inliers);
  a.is_ground = loc.accepted;
  obs.detections.push_back(a);
  return digest(obs) ^ mix64(loc.matches);
}

json localization_json(const LocalizationResult& loc) {
  return {{"accepted", loc.accepted},
          {"matches", loc.matches},
          {"inliers", loc.inliers},
          {"mean_reproj_error", loc.mean_reproj_error},
          {"translation_m", loc.metric_translation},
          {"reason", loc.reason},
          {"digest", hex64(localization_digest(loc))}};
}

json counters_json(const SessionCounters& c) {
  return {{"steps", c.steps},
          {"robot_actions", c.robot_actions},
          {"interventions", c.interventions},
          {"intervention_actions", c.intervention_actions},
          {"intervention_requests", c.intervention_requests},
          {"action_calls", c.action_calls}};
}

json step_json(const StepRecord& rec, double time) {
  return {{"type", "step"},
          {"step", rec.step},
          {"target", rec.target},
          {"outcome", std::string(to_string(rec.outcome))},
          {"localization", rec.localization ? localization_json(*rec.localization) : json(nullptr)},
          {"plan", rec.plan ? json{{"theta1", rec.plan->theta1}, {"distance", rec.plan->distance},
                                   {"theta2", rec.plan->theta2}}
                            : json(nullptr)},
          {"actions", rec.actions},
          {"poses", rec.poses},
          {"pose", rec.pose_after},
          {"time", time}};
}

void RunLogWriter::emit(const json& j) {
  lines_.push_back(j.dump());
  if (out_) {
    *out_ << lines_.back() << '\n';
    out_->flush();
  }
}

void RunLogWriter::header(const NavSession& session, std::uint64_t seed, const json& extra) {
  const RunTrace t = session.run_trace();
  json j = {{"type", "header"},
            {"format", "vnav-run"},
            {"version", kFileFormatVersion},
            {"seed", seed},
            {"path", session.path().frames},
            {"path_cost", session.path().total_cost},
            {"goal", session.path().frames.back()},
            {"goal_position", json::array({t.goal_position.x(), t.goal_position.y()})},
            {"reference", t.reference},
            {"start", t.executed.front()},
            {"start_time", session.agent().time}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  emit(j);
}

void RunLogWriter::command(const std::string& kind, const std::string& source, std::size_t after_step,
                           const std::optional<Action>& action, const std::optional<PlanarPose>& pose) {
  json j = {{"type", "command"}, {"kind", kind}, {"source", source}, {"after_step", after_step}};
  if (action) j["action"] = *action;
  if (pose) j["pose"] = *pose;
  emit(j);
}

void RunLogWriter::step(const StepRecord& rec, double time) { emit(step_json(rec, time)); }

void RunLogWriter::intervention(const InterventionRecord& rec) {
  emit({{"type", "intervention"},
        {"after_step", rec.after_step},
        {"nudges", rec.nudges},
        {"new_target_index", rec.new_target_index},
        {"new_target", rec.new_target}});
}

void RunLogWriter::end(RunStatus status, const NavSession& session, const RunMetrics& metrics) {
  emit({{"type", "end"},
        {"status", std::string(to_string(status))},
        {"goal_declared", session.goal_reached()},
        {"counters", counters_json(session.counters())},
        {"elapsed_s", metrics.elapsed_s},
        {"metrics", metrics}});
}

RunTrace trace_from_run_log_lines(const std::vector<std::string>& lines) {
  RunTrace t;
  bool have_header = false;
  bool have_end = false;
  double start_time = 0.0;
  double last_time = 0.0;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string where = "line " + std::to_string(n + 1) + ": ";
    if (lines[n].empty()) continue;
    json j;
    try {
      j = json::parse(lines[n]);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::LoadFailed, where + e.what());
    }
    try {
      const auto type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header" || j.value("format", "") != "vnav-run") {
          throw Error(ErrorCode::LoadFailed, where + "run log must start with a header");
        }
        if (j.at("version").get<int>() != kFileFormatVersion) {
          throw Error(ErrorCode::LoadFailed, where + "unsupported run log version");
        }
        t.reference = j.at("reference").get<std::vector<PlanarPose>>();
        const auto g = j.at("goal_position");
        t.goal_position = Vec2(g.at(0).get<double>(), g.at(1).get<double>());
        t.executed.push_back(j.at("start").get<PlanarPose>());
        start_time = last_time = j.at("start_time").get<double>();
        have_header = true;
      } else if (type == "step") {
        for (const auto& p : j.at("poses")) t.executed.push_back(p.get<PlanarPose>());
        t.robot_actions += j.at("actions").size();
        last_time = j.at("time").get<double>();
      } else if (type == "command") {
        if (j.at("kind").get<std::string>() == "nudge") {
          t.executed.push_back(j.at("pose").get<PlanarPose>());
          ++t.intervention_actions;
          last_time += kActionSeconds;
        }
      } else if (type == "intervention") {
        ++t.interventions;
      } else if (type == "end") {
        t.goal_declared = j.at("goal_declared").get<bool>();
        t.elapsed_s = j.at("elapsed_s").get<double>();
        have_end = true;
      } else if (type == "header") {
        throw Error(ErrorCode::LoadFailed, where + "second header");
      } else {
        throw Error(ErrorCode::LoadFailed, where + "unknown record type " + type);
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::LoadFailed, where + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::LoadFailed, "run log is empty");
  if (!have_end) t.elapsed_s = last_time - start_time;
  return t;
}

RunTrace trace_from_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::LoadFailed, path.string() + ": cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  try {
    return trace_from_run_log_lines(lines);
  } catch (const Error& e) {
    throw Error(ErrorCode::LoadFailed, path.string() + ": " + e.detail());
  }
}

}  // namespace vnav
