#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>

#include "vnav/nav_controller.hpp"
#include "vnav/run_log.hpp"
#include "vnav/serialization.hpp"

namespace vnav {

inline constexpr int kProtocolSchema = 1;

/// What a headless run does when the controller asks for help.
enum class OperatorPolicy {
  Relocalize,  // resume with zero nudges (retrieval re-localization only)
  Abort,       // end the run
  Wait,        // block until an operator acts (serve mode)
};

std::string_view to_string(OperatorPolicy p);
OperatorPolicy parse_policy(std::string_view s);

struct RunConfig {
  NavConfig nav;
  NoiseConfig noise = NoiseConfig::defaults();
  Rig rig;
  std::uint64_t seed = 0;
  std::size_t max_steps = 5000;
  OperatorPolicy policy = OperatorPolicy::Relocalize;
};

void to_json(json& j, const NavConfig& c);
void from_json(const json& j, NavConfig& c);
void to_json(json& j, const RunConfig& c);
/// Keys left out keep their current value in `c`.
void merge_run_config(const json& j, RunConfig& c);

/// Start of a run: a graph frame, or "auto" to pick the frame most similar
/// to what the camera sees at `pose`.
struct StartSpec {
  std::optional<FrameId> frame;
  std::optional<Pose> pose;  // body pose; defaults to the start frame's pose
};

/// "traj:index", or "traj:last" for the final frame of a trajectory.
FrameId resolve_frame(const SceneGraph& graph, const std::string& text);
/// "auto" or a frame accepted by resolve_frame.
StartSpec parse_start(const SceneGraph& graph, const std::string& s);

/// Initial retrieval localization (for "auto"), path planning, and a paused
/// session awaiting resume. Throws NoPath, GoalNotFound or InvalidSpec.
std::unique_ptr<NavSession> open_session(std::shared_ptr<const World> world,
                                         std::shared_ptr<const SceneGraph> graph, const StartSpec& start,
                                         const FrameId& goal, const RunConfig& cfg);

enum class CommandKind { Pause, Nudge, Resume, Abort };

struct OperatorCommand {
  CommandKind kind = CommandKind::Pause;
  std::optional<Action> action;
  std::optional<std::uint64_t> seq;  // inbound sequence number, echoed in the ack
  std::string source = "operator";
};

/// Drives one session. Operator commands are queued and applied only
/// between steps. Every outbound message goes through the sink as
/// (kind, payload); state_update follows each step and each command.
class SessionRunner {
 public:
  using Sink = std::function<void(const std::string& kind, const json& payload)>;
  enum class Tick { Stepped, Waiting, Finished };

  SessionRunner(std::unique_ptr<NavSession> session, RunConfig cfg, Sink sink, std::ostream* run_log,
                const json& header_extra = json::object());

  void enqueue(OperatorCommand c);
  Tick tick();
  /// Ticks until the run ends. A run left waiting with nothing queued ends
  /// as Aborted.
  RunStatus run_to_end();

  RunStatus status() const { return status_; }
  bool finished() const { return status_ != RunStatus::Running; }
  const NavSession& session() const { return *session_; }
  const std::optional<RunMetrics>& metrics() const { return metrics_; }
  const RunLogWriter& log() const { return log_; }
  json plan_payload() const;
  json state_payload(const std::optional<OperatorCommand>& ack = std::nullopt, bool accepted = true,
                     const std::string& outcome = "") const;

 private:
  void apply(const OperatorCommand& c);
  void finish(RunStatus s);
  void send(const std::string& kind, const json& payload);

  std::unique_ptr<NavSession> session_;
  RunConfig cfg_;
  Sink sink_;
  RunLogWriter log_;
  std::deque<OperatorCommand> queue_;
  RunStatus status_ = RunStatus::Running;
  std::optional<RunMetrics> metrics_;
};

struct ServiceOptions {
  std::filesystem::path world_file;
  std::filesystem::path graph_file;
  RunConfig defaults;
  std::filesystem::path run_log_dir;  // empty: no run log files
};

/// One operator connection speaking newline-delimited JSON:
///   {"kind": ..., "seq": n, "payload": {...}}
/// The client opens with hello (schema check), then open; pause, nudge,
/// resume and close follow. Outbound messages carry their own strictly
/// increasing seq. Thread-safe: on_line may be called from a reader thread
/// while another thread calls advance().
class ServiceConnection {
 public:
  using LineSink = std::function<void(const std::string& line)>;

  ServiceConnection(ServiceOptions opts, LineSink out);
  ~ServiceConnection();

  void on_line(const std::string& line);
  /// Handles queued inbound messages, then advances the session one tick.
  SessionRunner::Tick advance();
  /// Blocks until input arrives, the connection closes, or the timeout.
  void wait_for_input(std::chrono::milliseconds timeout);
  void close();
  bool closed() const;

  const SessionRunner* runner() const { return runner_.get(); }
  std::uint64_t outbound_seq() const { return out_seq_; }
  int step_delay_ms() const { return step_delay_ms_; }

 private:
  void handle(const json& msg);
  void handle_open(const json& payload);
  void send(const std::string& kind, const json& payload);
  void send_error(const std::string& code, const std::string& message, std::optional<std::uint64_t> ref);

  ServiceOptions opts_;
  LineSink out_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> inbox_;
  bool closed_ = false;
  bool hello_done_ = false;
  std::optional<std::uint64_t> last_in_seq_;
  std::uint64_t out_seq_ = 0;
  std::string session_id_;
  int step_delay_ms_ = 0;
  std::unique_ptr<std::ofstream> run_log_file_;
  std::unique_ptr<SessionRunner> runner_;
};

}  // namespace vnav
