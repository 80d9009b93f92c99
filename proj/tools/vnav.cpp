// vnav: command-line driver for every pipeline stage.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or config error,
// 3 goal not reached (or budget exceeded), 4 file could not be loaded.

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pipeline.hpp"
#include "vnav/error.hpp"
#include "vnav/run_log.hpp"
#include "vnav/socket_server.hpp"

namespace {

using namespace vnav;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotReached = 3;
constexpr int kExitLoad = 4;

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  bool seed_given = false;
};

pipeline::PipelineConfig config_of(const Common& c) {
  pipeline::PipelineConfig cfg = c.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(c.config);
  if (c.seed_given || c.config.empty()) cfg.run.seed = c.seed;
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Seed for every random stream")->each([&c](const std::string&) {
    c.seed_given = true;
  });
  cmd->add_option("--config", c.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) ks.push_back(std::stoul(tok));
  return ks;
}

void write_metrics(const std::string& path, const RunMetrics& m) {
  const std::string csv = metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n";
  if (!path.empty()) write_text_file(path, csv);
  std::cout << csv;
}

int cmd_gen_world(const Common& c, const std::string& out) {
  const auto cfg = config_of(c);
  const World world = generate_world(c.seed, cfg.world);
  save_world(out, world);
  std::cout << "world " << out << ": " << world.landmarks().size() << " landmarks, digest "
            << hex64(world.digest()) << "\n";
  return kExitOk;
}

int cmd_explore(const Common& c, const std::string& world_file, const std::vector<std::uint32_t>& ids,
                const std::string& out, const std::string& out_dir) {
  const auto cfg = config_of(c);
  const World world = load_world(world_file);
  std::vector<std::uint32_t> todo = ids;
  if (todo.empty()) {
    for (const auto& t : cfg.trajectories) todo.push_back(t.id);
  }
  if (todo.empty()) throw Error(ErrorCode::InvalidSpec, "no trajectories to explore");
  if (!out.empty() && todo.size() != 1) {
    throw Error(ErrorCode::InvalidSpec, "--out takes exactly one trajectory; use --out-dir");
  }
  for (const auto id : todo) {
    const auto log = pipeline::explore(world, pipeline::trajectory(cfg, id), cfg.run.rig, cfg.explore_noise, c.seed);
    fs::path path = out;
    if (path.empty()) {
      fs::create_directories(out_dir);
      path = fs::path(out_dir) / ("traj_" + std::to_string(id) + ".jsonl");
    }
    save_log(path, log, world);
    std::cout << "trajectory " << id << ": " << log.entries.size() << " frames -> " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_build_graph(const Common& c, const std::string& world_file, const std::vector<std::string>& logs,
                    const std::string& out, std::optional<std::size_t> chunk, std::optional<std::size_t> knn,
                    std::optional<std::size_t> corr) {
  auto cfg = config_of(c);
  const World world = load_world(world_file);
  std::vector<ExplorationLog> loaded;
  for (const auto& l : logs) loaded.push_back(load_log(l, world));
  GraphBuildOptions opts = cfg.graph;
  opts.chunks.seed = c.seed;
  if (chunk) opts.chunks.chunk_size = *chunk;
  if (knn) opts.cross.k = *knn;
  if (corr) {
    opts.cross.corr_threshold = *corr;
    opts.auto_threshold = false;
  }
  const SceneGraph g = build_graph(loaded, world, opts);
  save_graph(out, g);
  std::size_t cross = 0;
  for (const auto& e : g.edges()) cross += e.kind == EdgeKind::Cross;
  std::cout << "graph " << out << ": " << g.frame_count() << " frames, " << g.chunks().size() << " chunks, "
            << g.edges().size() - cross << " sequential edges, " << cross << " cross edges\n";
  return kExitOk;
}

int cmd_eval_recall(const Common& c, const std::string& world_file, const std::string& graph_file,
                    pipeline::RecallOptions opts, const std::string& out) {
  const auto cfg = config_of(c);
  const World world = load_world(world_file);
  const SceneGraph g = load_graph(graph_file);
  std::unordered_map<FrameId, Vec2> positions;
  const auto queries = pipeline::recall_queries(world, g, cfg.run.rig, opts, c.seed, &positions);
  const RecallReport r = evaluate_recall(g.index(), queries, positions, opts.protocol);
  std::ostringstream s;
  s << "queries " << r.query_count << " of " << queries.size() << ", database " << r.database_count << ", regions "
    << r.region_count << "\n";
  s << "k,recall_percent\n";
  for (const auto& [k, v] : r.recall_at) s << k << "," << std::fixed << std::setprecision(1) << v << "\n";
  if (!out.empty()) write_text_file(out, s.str());
  std::cout << s.str();
  return kExitOk;
}

int cmd_plan(const Common& c, const std::string& graph_file, std::string start, std::string goal) {
  const auto cfg = config_of(c);
  if (start.empty()) start = cfg.start;
  if (goal.empty() && cfg.goal) goal = *cfg.goal;
  if (start.empty() || start == "auto" || goal.empty()) {
    throw Error(ErrorCode::InvalidSpec, "plan needs explicit --start and --goal frames");
  }
  const SceneGraph g = load_graph(graph_file);
  const PlannedPath p = plan_path(g, resolve_frame(g, start), resolve_frame(g, goal));
  std::cout << "# frames " << p.frames.size() << " cost " << p.total_cost << "\n";
  std::cout << "index,frame,x,y,edge_to_next\n";
  for (std::size_t i = 0; i < p.frames.size(); ++i) {
    const auto& kf = g.keyframe(p.frames[i]);
    std::string edge = "-";
    if (i + 1 < p.frames.size()) {
      for (const auto& [nb, e] : g.neighbors(p.frames[i])) {
        if (nb == p.frames[i + 1]) edge = g.edges()[e].kind == EdgeKind::Cross ? "cross" : "sequential";
      }
    }
    std::cout << i << "," << p.frames[i].str() << "," << kf.world_position_gt.x() << "," << kf.world_position_gt.y()
              << "," << edge << "\n";
  }
  return kExitOk;
}

struct RunArgs {
  std::string world, graph, start, goal, metrics, run_log, policy;
  std::string start_pose;  // "x,y,yaw_deg" for automatic starts
  std::optional<std::size_t> max_steps;
};

Pose parse_planar_pose(const std::string& s) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 3) throw Error(ErrorCode::InvalidSpec, "pose must be x,y,yaw_deg");
  return Pose::planar(v[0], v[1], v[2] * M_PI / 180.0);
}

int cmd_run(const Common& c, const RunArgs& a) {
  auto cfg = config_of(c);
  RunConfig rc = cfg.run;
  if (a.max_steps) rc.max_steps = *a.max_steps;
  if (!a.policy.empty()) rc.policy = parse_policy(a.policy);
  auto world = std::make_shared<const World>(load_world(a.world));
  auto graph = std::make_shared<const SceneGraph>(load_graph(a.graph));
  const std::string goal_text = !a.goal.empty() ? a.goal : cfg.goal.value_or("");
  if (goal_text.empty()) throw Error(ErrorCode::InvalidSpec, "run needs --goal");
  const FrameId goal = resolve_frame(*graph, goal_text);
  const std::string start_text = !a.start.empty() ? a.start : cfg.start;
  StartSpec start;
  if (start_text != "auto") start.frame = resolve_frame(*graph, start_text);
  if (!a.start_pose.empty()) {
    start.pose = parse_planar_pose(a.start_pose);
  } else if (cfg.start_position) {
    start.pose = Pose::planar(cfg.start_position->x(), cfg.start_position->y(), cfg.start_yaw.value_or(0.0));
  }
  auto session = open_session(world, graph, start, goal, rc);

  std::ofstream log_file;
  std::ostream* log_stream = nullptr;
  if (!a.run_log.empty()) {
    log_file.open(a.run_log);
    if (!log_file) throw Error(ErrorCode::LoadFailed, a.run_log + ": cannot open for writing");
    log_stream = &log_file;
  }
  SessionRunner runner(std::move(session), rc, nullptr, log_stream);
  runner.enqueue({CommandKind::Resume, std::nullopt, std::nullopt, "start"});
  const RunStatus st = runner.run_to_end();
  write_metrics(a.metrics, *runner.metrics());
  std::cerr << "status " << to_string(st) << ", steps " << runner.session().counters().steps << ", final error "
            << runner.metrics()->final_distance_to_goal << " m\n";
  return st == RunStatus::GoalReached && runner.metrics()->success ? kExitOk : kExitNotReached;
}

int cmd_replay(const Common& c, const std::string& world_file, const std::string& log_file,
               const std::string& against, const std::string& metrics) {
  const auto cfg = config_of(c);
  const World world = load_world(world_file);
  const ExplorationLog log = load_log(log_file, world);
  const RunMetrics m = evaluate_replay(log, cfg.run.noise.actuation, cfg.run.seed);
  write_metrics(metrics, m);
  if (!against.empty()) {
    const RunMetrics r = evaluate_trace(trace_from_run_log(against));
    std::cout << "\nmethod,final_error_m,sr_1_5\n";
    std::cout << "replay," << m.final_distance_to_goal << "," << m.sr_hit[0] << "\n";
    std::cout << "run," << r.final_distance_to_goal << "," << r.sr_hit[0] << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& run_log, const std::string& metrics, bool as_json) {
  const RunMetrics m = evaluate_trace(trace_from_run_log(run_log));
  if (as_json) {
    std::cout << json(m).dump(2) << "\n";
    if (!metrics.empty()) write_text_file(metrics, metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n");
  } else {
    write_metrics(metrics, m);
  }
  return kExitOk;
}

SocketServer* g_server = nullptr;

int cmd_serve(const Common& c, const std::string& world_file, const std::string& graph_file, std::uint16_t port,
              const std::string& run_log_dir, std::size_t max_connections, const std::string& policy) {
  ServiceOptions opts;
  opts.world_file = world_file;
  opts.graph_file = graph_file;
  opts.run_log_dir = run_log_dir;
  auto cfg = config_of(c);
  opts.defaults = cfg.run;
  opts.defaults.policy = parse_policy(policy);
  // Fail early on bad inputs rather than on the first open.
  (void)load_world(world_file);
  (void)load_graph(graph_file);
  SocketServer server(opts, port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening 127.0.0.1:" << server.port() << std::endl;
  server.serve(max_connections);
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vnav: teach-and-repeat visual navigation on a synthetic world"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-world", "Generate a world from the config's world section");
  std::string gen_out;
  add_common(gen, common);
  gen->add_option("--out", gen_out, "World file to write")->required();

  auto* exp = app.add_subcommand("explore", "Record teach-pass exploration logs");
  std::string exp_world, exp_out, exp_dir;
  std::vector<std::uint32_t> exp_ids;
  add_common(exp, common);
  exp->add_option("--world", exp_world)->required()->check(CLI::ExistingFile);
  exp->add_option("--trajectory", exp_ids, "Trajectory id(s) from the config (default: all)");
  auto* exp_out_opt = exp->add_option("--out", exp_out, "Log file (single trajectory)");
  auto* exp_dir_opt = exp->add_option("--out-dir", exp_dir, "Directory for traj_<id>.jsonl");
  exp_out_opt->excludes(exp_dir_opt);
  exp->callback([&] {
    if (exp_out.empty() && exp_dir.empty()) throw CLI::RequiredError("--out or --out-dir");
  });

  auto* bg = app.add_subcommand("build-graph", "Build the scene graph from exploration logs");
  std::string bg_world, bg_out;
  std::vector<std::string> bg_logs;
  std::optional<std::size_t> bg_chunk, bg_knn, bg_corr;
  add_common(bg, common);
  bg->add_option("--world", bg_world)->required()->check(CLI::ExistingFile);
  bg->add_option("--log", bg_logs, "Exploration log(s)")->required()->check(CLI::ExistingFile);
  bg->add_option("--out", bg_out)->required();
  bg->add_option("--chunk-size", bg_chunk, "Frames per chunk (default 55)")->check(CLI::PositiveNumber);
  bg->add_option("--knn", bg_knn, "Cross-edge candidates per frame (default 5)")->check(CLI::PositiveNumber);
  bg->add_option("--corr-threshold", bg_corr, "Minimum correspondences for a cross edge (default: automatic)");

  auto* er = app.add_subcommand("eval-recall", "Place-recognition recall on side-displaced queries");
  std::string er_world, er_graph, er_out, er_ks;
  std::optional<double> er_same, er_db, er_band, er_offset, er_desc_sigma, er_pix_sigma;
  add_common(er, common);
  er->add_option("--world", er_world)->required()->check(CLI::ExistingFile);
  er->add_option("--graph", er_graph)->required()->check(CLI::ExistingFile);
  er->add_option("--same-place-radius", er_same, "Correct-retrieval radius in meters (default 1.0)");
  er->add_option("--db-radius", er_db, "Database region radius in meters (default 0.5)");
  er->add_option("--band", er_band, "Query band width in meters (default 0.5)");
  er->add_option("--ks", er_ks, "Comma-separated k values (default 1,5,10,15)");
  er->add_option("--query-offset", er_offset, "Sideways query displacement in meters (default 0.6)");
  er->add_option("--descriptor-sigma", er_desc_sigma, "Query descriptor noise");
  er->add_option("--pixel-sigma", er_pix_sigma, "Query pixel noise");
  er->add_option("--out", er_out, "Also write the report here");

  auto* pl = app.add_subcommand("plan", "Print the planned frame path");
  std::string pl_graph, pl_start, pl_goal;
  add_common(pl, common);
  pl->add_option("--graph", pl_graph)->required()->check(CLI::ExistingFile);
  pl->add_option("--start", pl_start, "Start frame traj:index");
  pl->add_option("--goal", pl_goal, "Goal frame traj:index or traj:last");

  auto* run = app.add_subcommand("run", "Headless closed-loop navigation");
  RunArgs ra;
  add_common(run, common);
  run->add_option("--world", ra.world)->required()->check(CLI::ExistingFile);
  run->add_option("--graph", ra.graph)->required()->check(CLI::ExistingFile);
  run->add_option("--start", ra.start, "Start frame or 'auto' (retrieval from --start-pose)");
  run->add_option("--start-pose", ra.start_pose, "Agent pose x,y,yaw_deg");
  run->add_option("--goal", ra.goal, "Goal frame traj:index or traj:last");
  run->add_option("--metrics", ra.metrics, "Metrics CSV to write");
  run->add_option("--run-log", ra.run_log, "Run log (JSON lines) to write");
  run->add_option("--max-steps", ra.max_steps, "Step budget");
  run->add_option("--policy", ra.policy, "On intervention: relocalize, abort or wait")
      ->check(CLI::IsMember({"relocalize", "abort", "wait"}));

  auto* rp = app.add_subcommand("replay", "Open-loop baseline: re-execute the taught actions");
  std::string rp_world, rp_log, rp_against, rp_metrics;
  add_common(rp, common);
  rp->add_option("--world", rp_world)->required()->check(CLI::ExistingFile);
  rp->add_option("--log", rp_log, "Exploration log to replay")->required()->check(CLI::ExistingFile);
  rp->add_option("--against", rp_against, "Run log to compare final errors with")->check(CLI::ExistingFile);
  rp->add_option("--metrics", rp_metrics, "Metrics CSV to write");

  auto* ev = app.add_subcommand("eval", "Recompute metrics from a run log");
  std::string ev_log, ev_metrics;
  bool ev_json = false;
  add_common(ev, common);
  ev->add_option("--run-log", ev_log)->required()->check(CLI::ExistingFile);
  ev->add_option("--metrics", ev_metrics, "Metrics CSV to write");
  ev->add_flag("--json", ev_json, "Print metrics as JSON");

  auto* sv = app.add_subcommand("serve", "Session service for the operator console (NDJSON over TCP)");
  std::string sv_world, sv_graph, sv_logs, sv_policy = "wait";
  std::uint16_t sv_port = 7878;
  std::size_t sv_max = 0;
  add_common(sv, common);
  sv->add_option("--world", sv_world)->required()->check(CLI::ExistingFile);
  sv->add_option("--graph", sv_graph)->required()->check(CLI::ExistingFile);
  sv->add_option("--port", sv_port, "TCP port on 127.0.0.1 (0 picks one)");
  sv->add_option("--run-log-dir", sv_logs, "Directory for per-session run logs");
  sv->add_option("--max-connections", sv_max, "Exit after serving this many connections (0 = never)");
  sv->add_option("--policy", sv_policy, "On intervention: wait, relocalize or abort")
      ->check(CLI::IsMember({"relocalize", "abort", "wait"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_world(common, gen_out);
    if (*exp) return cmd_explore(common, exp_world, exp_ids, exp_out, exp_dir);
    if (*bg) return cmd_build_graph(common, bg_world, bg_logs, bg_out, bg_chunk, bg_knn, bg_corr);
    if (*er) {
      auto opts = config_of(common).recall;
      if (er_same) opts.protocol.same_place_radius = *er_same;
      if (er_db) opts.protocol.db_radius = *er_db;
      if (er_band) opts.protocol.band = *er_band;
      if (!er_ks.empty()) opts.protocol.ks = parse_ks(er_ks);
      if (er_offset) opts.query_offset = *er_offset;
      if (er_desc_sigma) opts.query_noise.descriptor_sigma = *er_desc_sigma;
      if (er_pix_sigma) opts.query_noise.pixel_sigma = *er_pix_sigma;
      return cmd_eval_recall(common, er_world, er_graph, opts, er_out);
    }
    if (*pl) return cmd_plan(common, pl_graph, pl_start, pl_goal);
    if (*run) return cmd_run(common, ra);
    if (*rp) return cmd_replay(common, rp_world, rp_log, rp_against, rp_metrics);
    if (*ev) return cmd_eval(ev_log, ev_metrics, ev_json);
    if (*sv) return cmd_serve(common, sv_world, sv_graph, sv_port, sv_logs, sv_max, sv_policy);
  } catch (const Error& e) {
    std::cerr << "vnav: " << e.what() << "\n";
    if (e.code() == ErrorCode::LoadFailed) return kExitLoad;
    if (e.code() == ErrorCode::InvalidSpec) return kExitUsage;
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "vnav: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
