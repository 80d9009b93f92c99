#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vnav/nav_controller.hpp"
#include "vnav/serialization.hpp"

namespace vnav {

enum class RunStatus { Running, GoalReached, BudgetExceeded, Aborted };

std::string_view to_string(RunStatus s);

/// Digest of a localization result (pose, inlier count, acceptance).
std::uint64_t localization_digest(const LocalizationResult& loc);

json step_json(const StepRecord& rec, double time);
json localization_json(const LocalizationResult& loc);
json counters_json(const SessionCounters& c);

/// Line-oriented run record: one JSON object per line with a "type" of
/// header, command, step, intervention or end. Lines are flushed as they
/// are written.
class RunLogWriter {
 public:
  explicit RunLogWriter(std::ostream* out) : out_(out) {}

  void header(const NavSession& session, std::uint64_t seed, const json& extra = json::object());
  void command(const std::string& kind, const std::string& source, std::size_t after_step,
               const std::optional<Action>& action = std::nullopt,
               const std::optional<PlanarPose>& pose = std::nullopt);
  void step(const StepRecord& rec, double time);
  void intervention(const InterventionRecord& rec);
  void end(RunStatus status, const NavSession& session, const RunMetrics& metrics);

  const std::vector<std::string>& lines() const { return lines_; }

 private:
  void emit(const json& j);

  std::ostream* out_;
  std::vector<std::string> lines_;
};

/// Rebuilds the scoring input from a run log. Throws LoadFailed on
/// malformed or truncated logs.
RunTrace trace_from_run_log(const std::filesystem::path& path);
RunTrace trace_from_run_log_lines(const std::vector<std::string>& lines);

}  // namespace vnav
