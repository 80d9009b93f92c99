#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vnav/error.hpp"
#include "vnav/nav_service.hpp"
#include "vnav/socket_server.hpp"

namespace vnav {
namespace {

namespace fs = std::filesystem;

// World and graph files shared by every test in this file.
class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("vnav_service_" + std::to_string(::getpid())));
    fs::create_directories(*dir_);
    sc_ = new fixture::Scenario(fixture::straight(41, 20.0));
    save_world(*dir_ / "w.json", *sc_->world);
    save_graph(*dir_ / "g.json", *sc_->graph);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete sc_;
    delete dir_;
  }

  static ServiceOptions options(const fs::path& logs = {}) {
    ServiceOptions o;
    o.world_file = *dir_ / "w.json";
    o.graph_file = *dir_ / "g.json";
    o.defaults.seed = 5;
    o.defaults.policy = OperatorPolicy::Wait;
    o.run_log_dir = logs;
    return o;
  }

  static std::string msg(const std::string& kind, std::uint64_t seq, const json& payload = json::object()) {
    return json{{"kind", kind}, {"seq", seq}, {"payload", payload}}.dump();
  }

  static fixture::Scenario* sc_;
  static fs::path* dir_;
};
fixture::Scenario* ServiceTest::sc_ = nullptr;
fs::path* ServiceTest::dir_ = nullptr;

// Collects every outbound message of one connection.
struct Client {
  std::vector<json> out;
  ServiceConnection conn;

  explicit Client(ServiceOptions o) : conn(std::move(o), [this](const std::string& l) { out.push_back(json::parse(l)); }) {}

  std::vector<json> take() {
    std::vector<json> r;
    r.swap(out);
    return r;
  }
  std::vector<json> send(const std::string& line) {
    conn.on_line(line);
    conn.advance();
    return take();
  }
  static std::vector<json> of_kind(const std::vector<json>& v, const std::string& kind) {
    std::vector<json> r;
    for (const auto& m : v) {
      if (m["kind"] == kind) r.push_back(m);
    }
    return r;
  }
};

TEST_F(ServiceTest, HelloHandshake) {
  Client c(options());
  const auto r = c.send(msg("hello", 1, {{"schema", kProtocolSchema}}));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0]["kind"], "hello");
  EXPECT_EQ(r[0]["seq"], 0);
  EXPECT_EQ(r[0]["payload"]["schema"], kProtocolSchema);
  EXPECT_FALSE(c.conn.closed());
}

TEST_F(ServiceTest, SchemaMismatchCloses) {
  Client c(options());
  const auto r = c.send(msg("hello", 1, {{"schema", kProtocolSchema + 1}}));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0]["kind"], "error");
  EXPECT_EQ(r[0]["payload"]["code"], "SchemaMismatch");
  EXPECT_EQ(r[0]["payload"]["ref_seq"], 1);
  EXPECT_TRUE(c.conn.closed());
}

TEST_F(ServiceTest, MalformedAndOutOfOrderMessages) {
  Client c(options());
  auto r = c.send(msg("pause", 1));
  EXPECT_EQ(r.at(0)["payload"]["code"], "BadMessage");
  r = c.send("{not json");
  EXPECT_EQ(r.at(0)["payload"]["code"], "BadMessage");
  r = c.send(R"({"kind": "hello", "seq": -3})");
  EXPECT_EQ(r.at(0)["payload"]["code"], "BadMessage");
  c.send(msg("hello", 5, {{"schema", kProtocolSchema}}));
  r = c.send(msg("pause", 5));
  EXPECT_EQ(r.at(0)["payload"]["code"], "BadSequence");
  EXPECT_EQ(r.at(0)["payload"]["ref_seq"], 5);
  r = c.send(msg("pause", 4));
  EXPECT_EQ(r.at(0)["payload"]["code"], "BadSequence");
  r = c.send(msg("pause", 6));
  EXPECT_EQ(r.at(0)["payload"]["code"], "NoSession");
  r = c.send(msg("teleport", 7));
  EXPECT_EQ(r.at(0)["payload"]["code"], "BadMessage");
}

TEST_F(ServiceTest, OpenErrors) {
  Client c(options());
  c.send(msg("hello", 1, {{"schema", kProtocolSchema}}));
  auto r = c.send(msg("open", 2, {{"start", "0:0"}, {"goal", "0:5000"}}));
  EXPECT_EQ(r.at(0)["payload"]["code"], "GoalNotFound");
  r = c.send(msg("open", 3, {{"start", "0:0"}, {"goal", "4:last"}}));
  EXPECT_EQ(r.at(0)["payload"]["code"], "GoalNotFound");
  r = c.send(msg("open", 4, {{"start", "0:0"}}));
  EXPECT_EQ(r.at(0)["payload"]["code"], "InvalidSpec");
  r = c.send(msg("open", 5, {{"start", "0:0"}, {"goal", "0:last"}, {"world", (*dir_ / "nope.json").string()}}));
  EXPECT_EQ(r.at(0)["payload"]["code"], "LoadFailed");
  r = c.send(msg("open", 6, {{"start", "0:0"}, {"goal", "0:last"}, {"config", {{"max_stepz", 1}}}}));
  EXPECT_EQ(r.at(0)["payload"]["code"], "InvalidSpec");
  EXPECT_EQ(c.conn.runner(), nullptr);
  EXPECT_FALSE(c.conn.closed());
}

TEST_F(ServiceTest, CommandsAreAcknowledgedInOrder) {
  Client c(options());
  c.send(msg("hello", 1, {{"schema", kProtocolSchema}}));
  auto r = c.send(msg("open", 2, {{"start", "0:0"}, {"goal", "0:last"}}));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0]["kind"], "plan_set");
  EXPECT_EQ(r[0]["payload"]["start"], "0:0");
  EXPECT_EQ(r[1]["kind"], "state_update");
  EXPECT_EQ(r[1]["payload"]["mode"], "paused");
  const std::string session = r[0]["session"];
  EXPECT_EQ(session[0], 's');

  // Ten rapid nudges while paused, handled in one batch.
  for (std::uint64_t i = 0; i < 10; ++i) {
    c.conn.on_line(msg("nudge", 3 + i, {{"action", i % 2 ? "turn_left" : "turn_right"}}));
  }
  EXPECT_EQ(c.conn.advance(), SessionRunner::Tick::Waiting);
  r = c.take();
  ASSERT_EQ(r.size(), 10u);
  for (std::uint64_t i = 0; i < 10; ++i) {
    EXPECT_EQ(r[i]["kind"], "state_update");
    EXPECT_EQ(r[i]["session"], session);
    EXPECT_EQ(r[i]["payload"]["ack"]["seq"], 3 + i);
    EXPECT_EQ(r[i]["payload"]["ack"]["kind"], "nudge");
    EXPECT_TRUE(r[i]["payload"]["ack"]["accepted"]);
  }
  EXPECT_EQ(r.back()["payload"]["counters"]["intervention_actions"], 10);

  r = c.send(msg("resume", 13));
  auto acks = Client::of_kind(r, "state_update");
  ASSERT_GE(acks.size(), 1u);
  EXPECT_EQ(acks[0]["payload"]["ack"]["kind"], "resume");
  EXPECT_EQ(acks[0]["payload"]["mode"], "auto");
  EXPECT_EQ(acks[0]["payload"]["counters"]["interventions"], 1);

  // Nudges in auto mode are refused.
  r = c.send(msg("nudge", 14, {{"action", "forward"}}));
  ASSERT_GE(r.size(), 2u);
  EXPECT_EQ(r[0]["kind"], "error");
  EXPECT_EQ(r[0]["payload"]["code"], "InvalidSession");
  EXPECT_EQ(r[0]["payload"]["ref_seq"], 14);
  EXPECT_EQ(r[1]["payload"]["ack"]["accepted"], false);

  r = c.send(msg("pause", 15));
  EXPECT_EQ(r.at(0)["payload"]["ack"]["kind"], "pause");
  EXPECT_EQ(r.at(0)["payload"]["mode"], "paused");
  EXPECT_EQ(c.conn.advance(), SessionRunner::Tick::Waiting);

  r = c.send(msg("close", 16));
  const auto metrics = Client::of_kind(r, "metrics");
  ASSERT_EQ(metrics.size(), 1u);
  EXPECT_EQ(metrics[0]["payload"]["status"], "aborted");
  EXPECT_TRUE(c.conn.closed());
}

TEST_F(ServiceTest, OutboundSeqStrictlyIncreases) {
  Client c(options());
  c.send(msg("hello", 1, {{"schema", kProtocolSchema}}));
  c.send(msg("open", 2, {{"start", "0:0"}, {"goal", "0:20"}, {"autostart", true}}));
  std::vector<json> all;
  for (int i = 0; i < 500 && !(c.conn.runner() && c.conn.runner()->finished()); ++i) {
    c.conn.advance();
    for (auto& m : c.take()) all.push_back(m);
  }
  ASSERT_TRUE(c.conn.runner()->finished());
  for (std::size_t i = 1; i < all.size(); ++i) ASSERT_GT(all[i]["seq"], all[i - 1]["seq"]);
  const auto matches = Client::of_kind(all, "frame_match");
  ASSERT_FALSE(matches.empty());
  const auto& live = matches.front()["payload"]["live"];
  ASSERT_FALSE(live.empty());
  EXPECT_EQ(live[0].size(), 3u);
  const auto metrics = Client::of_kind(all, "metrics");
  ASSERT_EQ(metrics.size(), 1u);
  EXPECT_EQ(metrics[0]["payload"]["status"], "goal_reached");
  EXPECT_EQ(metrics[0]["payload"]["csv_header"], metrics_csv_header());
}

std::unique_ptr<NavSession> open_at(const fixture::Scenario& sc, const RunConfig& cfg, const std::string& goal) {
  return open_session(sc.world, sc.graph, parse_start(*sc.graph, "0:0"), resolve_frame(*sc.graph, goal), cfg);
}

TEST_F(ServiceTest, PauseResumeIsTransparent) {
  RunConfig cfg;
  cfg.seed = 9;
  const auto run = [&](int pause_at) {
    std::ostringstream log;
    SessionRunner r(open_at(*sc_, cfg, "0:last"), cfg, nullptr, &log);
    r.enqueue({CommandKind::Resume, std::nullopt, std::nullopt, "start"});
    for (int i = 0; !r.finished(); ++i) {
      if (i == pause_at) {
        r.enqueue({CommandKind::Pause});
        EXPECT_EQ(r.tick(), SessionRunner::Tick::Waiting);
        EXPECT_EQ(r.tick(), SessionRunner::Tick::Waiting);
        r.enqueue({CommandKind::Resume});
      }
      r.tick();
    }
    std::vector<PlanarPose> trace = r.session().trace();
    return std::make_pair(trace, r.metrics()->final_distance_to_goal);
  };
  const auto plain = run(-1);
  for (int at : {0, 3, 17}) {
    const auto paused = run(at);
    ASSERT_EQ(paused.first.size(), plain.first.size()) << at;
    for (std::size_t i = 0; i < plain.first.size(); ++i) {
      ASSERT_EQ(paused.first[i].x, plain.first[i].x);
      ASSERT_EQ(paused.first[i].yaw, plain.first[i].yaw);
    }
    EXPECT_EQ(paused.second, plain.second);
  }
}

TEST_F(ServiceTest, ServiceRunLogEqualsHeadlessRunLog) {
  const fs::path logs = *dir_ / "logs_equiv";
  Client c(options(logs));
  c.send(msg("hello", 1, {{"schema", kProtocolSchema}}));
  c.send(msg("open", 2, {{"start", "0:0"}, {"goal", "0:last"}, {"autostart", true}, {"config", {{"policy", "relocalize"}}}}));
  ASSERT_NE(c.conn.runner(), nullptr);
  while (!c.conn.runner()->finished()) c.conn.advance();
  const std::string id = c.take().back()["session"];
  std::ifstream in(logs / (id + ".jsonl"));
  const std::string served((std::istreambuf_iterator<char>(in)), {});

  RunConfig cfg = options().defaults;
  cfg.policy = OperatorPolicy::Relocalize;
  std::ostringstream headless;
  SessionRunner r(open_at(*sc_, cfg, "0:last"), cfg, nullptr, &headless);
  r.enqueue({CommandKind::Resume, std::nullopt, std::nullopt, "start"});
  EXPECT_EQ(r.run_to_end(), RunStatus::GoalReached);
  EXPECT_EQ(served, headless.str());
  EXPECT_FALSE(served.empty());

  // The log alone reproduces the on-line metrics.
  std::vector<std::string> lines;
  std::istringstream ls(served);
  for (std::string l; std::getline(ls, l);) lines.push_back(l);
  EXPECT_EQ(metrics_csv_row(evaluate_trace(trace_from_run_log_lines(lines))), metrics_csv_row(*r.metrics()));
}

TEST_F(ServiceTest, AutoStartPicksNearestFrame) {
  const auto frames = sc_->graph->frames();
  for (std::uint32_t i : {10u, 35u, 60u}) {
    const auto& kf = sc_->graph->keyframe({0, i});
    StartSpec start = parse_start(*sc_->graph, "auto");
    EXPECT_FALSE(start.frame.has_value());
    start.pose = Pose::planar(kf.world_position_gt.x() + 0.1, kf.world_position_gt.y() - 0.2, kf.world_yaw_gt);
    RunConfig cfg;
    const auto s = open_session(sc_->world, sc_->graph, start, resolve_frame(*sc_->graph, "0:last"), cfg);
    const std::size_t want = oracle::nearest_path_frame(*sc_->graph, frames, start.pose->translation.head<2>());
    EXPECT_LE(std::abs(long(s->path().frames.front().index) - long(frames[want].index)), 2) << i;
    EXPECT_EQ(s->mode(), SessionMode::Paused);
  }
  try {
    parse_start(*sc_->graph, "somewhere");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
  }
}

TEST_F(ServiceTest, OperatorPolicies) {
  RunConfig cfg;
  cfg.noise = NoiseConfig::none();
  cfg.noise.dropout_rate = 1.0;
  cfg.policy = OperatorPolicy::Abort;
  SessionRunner a(open_at(*sc_, cfg, "0:last"), cfg, nullptr, nullptr);
  a.enqueue({CommandKind::Resume});
  EXPECT_EQ(a.run_to_end(), RunStatus::Aborted);
  EXPECT_EQ(a.session().counters().intervention_requests, 1u);
  EXPECT_EQ(a.session().counters().interventions, 0u);

  cfg.policy = OperatorPolicy::Wait;
  SessionRunner w(open_at(*sc_, cfg, "0:last"), cfg, nullptr, nullptr);
  w.enqueue({CommandKind::Resume});
  SessionRunner::Tick t = SessionRunner::Tick::Stepped;
  for (int i = 0; i < 20 && t == SessionRunner::Tick::Stepped; ++i) t = w.tick();
  EXPECT_EQ(t, SessionRunner::Tick::Waiting);
  EXPECT_EQ(w.session().mode(), SessionMode::Intervention);
  EXPECT_EQ(w.run_to_end(), RunStatus::Aborted);

  cfg.policy = OperatorPolicy::Relocalize;
  cfg.max_steps = 40;
  SessionRunner r(open_at(*sc_, cfg, "0:last"), cfg, nullptr, nullptr);
  r.enqueue({CommandKind::Resume});
  EXPECT_EQ(r.run_to_end(), RunStatus::BudgetExceeded);
  EXPECT_EQ(r.session().counters().steps, 40u);
  EXPECT_GT(r.session().counters().interventions, 0u);
  EXPECT_EQ(r.session().counters().interventions, r.session().counters().intervention_requests);
}

TEST(RunConfigJson, MergeKeepsUnsetFields) {
  RunConfig c;
  c.seed = 3;
  merge_run_config({{"max_steps", 7}, {"nav", {{"pos_reach_tol", 0.5}}}, {"policy", "abort"}}, c);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.max_steps, 7u);
  EXPECT_EQ(c.nav.pos_reach_tol, 0.5);
  EXPECT_EQ(c.nav.yaw_reach_tol_deg, NavConfig{}.yaw_reach_tol_deg);
  EXPECT_EQ(c.policy, OperatorPolicy::Abort);
  EXPECT_THROW(merge_run_config({{"polcy", "abort"}}, c), Error);
  EXPECT_THROW(merge_run_config({{"policy", "panic"}}, c), Error);
  const json j = c;
  RunConfig d;
  merge_run_config(j, d);
  EXPECT_EQ(json(d), j);
}

TEST_F(ServiceTest, SocketServerSmoke) {
  SocketServer server(options(), 0);
  ASSERT_NE(server.port(), 0);
  std::thread th([&] { server.serve(1); });

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(fd, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(server.port());
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  timeval tv{60, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  const auto write_line = [&](const std::string& s) {
    const std::string l = s + "\n";
    ASSERT_EQ(::send(fd, l.data(), l.size(), 0), static_cast<ssize_t>(l.size()));
  };
  write_line(msg("hello", 1, {{"schema", kProtocolSchema}}));
  write_line(msg("open", 2, {{"start", "0:0"}, {"goal", "0:12"}, {"autostart", true}}));

  std::string buf;
  std::vector<json> got;
  bool done = false;
  char chunk[4096];
  while (!done) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
      got.push_back(json::parse(buf.substr(0, nl)));
      buf.erase(0, nl + 1);
      if (got.back()["kind"] == "metrics") done = true;
    }
  }
  write_line(msg("close", 3));
  ::close(fd);
  th.join();

  ASSERT_TRUE(done);
  EXPECT_EQ(got.front()["kind"], "hello");
  EXPECT_EQ(got[1]["kind"], "plan_set");
  EXPECT_EQ(Client::of_kind(got, "metrics").front()["payload"]["status"], "goal_reached");
}

}  // namespace
}  // namespace vnav
