// echogrid command-line front end.

#include "echogrid/analysis.hpp"
#include "echogrid/audio.hpp"
#include "echogrid/batch.hpp"
#include "echogrid/error.hpp"
#include "echogrid/replay.hpp"
#include "echogrid/scene.hpp"
#include "echogrid/session_log.hpp"
#include "echogrid/simulation.hpp"
#include "echogrid/tasks.hpp"
#include "echogrid/transport.hpp"
#include "echogrid/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace echogrid;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw StorageError("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

json load_config(const Globals& g) {
  if (g.config_path.empty()) return json::object();
  try {
    return json::parse(read_text(g.config_path));
  } catch (const json::parse_error& e) {
    throw DataError("config " + g.config_path + ": " + e.what());
  }
}

TaskKind task_flag(const std::string& text) {
  try {
    return parse_task_kind(text);
  } catch (const std::exception&) {
    throw UsageError("--task must be localization or navigation");
  }
}

Mode mode_flag(const std::string& text) {
  try {
    return parse_mode(text);
  } catch (const std::exception&) {
    throw UsageError("--mode must be 2d or 3d");
  }
}

AgentKind agent_flag(const std::string& text) {
  try {
    return parse_agent_kind(text);
  } catch (const std::exception&) {
    throw UsageError("--agent must be sweep, updown or oracle");
  }
}

// ---------------------------------------------------------------------------

struct GenSceneArgs {
  std::string task = "localization";
  int course = 0;
  std::string output;
};

int cmd_gen_scene(const Globals& g, const GenSceneArgs& a) {
  if (!g.seed) throw UsageError("gen-scene needs --seed");
  const TaskKind task = task_flag(a.task);
  std::uint64_t seed = *g.seed;
  Scene scene;
  std::string name;
  if (task == TaskKind::Localization) {
    if (a.course != 0) throw UsageError("--course applies to the navigation task only");
    scene = gen_localization(seed).scene();
    name = "scene-localization-" + std::to_string(seed) + ".json";
  } else {
    if (a.course != 0) seed = course_seed(seed, a.course);
    scene = gen_navigation(seed).scene();
    name = "scene-navigation-" + std::to_string(*g.seed) + (a.course ? "-c" + std::to_string(a.course) : "") + ".json";
  }
  const fs::path path = a.output.empty() ? fs::path(g.out_dir) / name : fs::path(a.output);
  write_text(path, scene_to_config(scene));
  std::cout << path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string task;
  std::string mode = "2d";
  std::string agent;
  std::string seeds;
  bool crossover = false;
  int participants = 16;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const SimConfig config = batch::sim_config_from_json(load_config(g));
  std::vector<batch::RunSpec> specs;
  if (a.crossover) {
    if (!a.seeds.empty()) throw UsageError("--crossover derives seeds from --seed; drop --seeds");
    if (!g.seed) throw UsageError("--crossover needs --seed");
    batch::CrossoverOptions o;
    o.participants = a.participants;
    o.base_seed = *g.seed;
    if (!a.task.empty() && a.task != "both") {
      const TaskKind t = task_flag(a.task);
      o.localization = t == TaskKind::Localization;
      o.navigation = t == TaskKind::Navigation;
    }
    if (!a.agent.empty()) {
      const AgentKind k = agent_flag(a.agent);
      if (o.localization && o.navigation) throw UsageError("--agent with --crossover needs a single --task");
      (o.localization ? o.localization_agent : o.navigation_agent) = k;
    }
    try {
      specs = batch::plan_crossover(o);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    if (a.task.empty() || a.task == "both") throw UsageError("simulate needs --task localization or navigation");
    const TaskKind task = task_flag(a.task);
    std::vector<std::uint64_t> seeds;
    try {
      if (!a.seeds.empty()) seeds = batch::parse_seed_list(a.seeds);
      else if (g.seed) seeds = {*g.seed};
      else throw std::invalid_argument("simulate needs --seeds or --seed");
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const AgentKind agent = a.agent.empty() ? batch::default_agent(task) : agent_flag(a.agent);
    const AgentKind own = batch::default_agent(task);
    if (agent != own && agent != AgentKind::Oracle)
      throw UsageError("agent " + std::string(to_string(agent)) + " cannot do the " + std::string(to_string(task)) +
                       " task");
    specs = batch::plan_batch(task, mode_flag(a.mode), agent, seeds);
  }

  const std::vector<batch::RunOutcome> outcomes = batch::run_all(specs, config);
  const fs::path out(g.out_dir);
  for (const batch::RunOutcome& o : outcomes)
    write_session_log_atomic(o.log, out / "logs" / batch::log_file_name(o.spec));
  write_text(out / "summary.csv", batch::summary_csv(outcomes));
  write_text(out / "summary.json", batch::summary_json(outcomes).dump(2) + "\n");

  if (a.crossover) {
    for (const auto& [task, metric] : std::vector<std::pair<TaskKind, std::string>>{
             {TaskKind::Localization, "mean_error_m"},
             {TaskKind::Localization, "time_s"},
             {TaskKind::Navigation, "course_time_s"},
             {TaskKind::Navigation, "missed"}}) {
      const auto records = batch::dataset(outcomes, task, metric);
      if (records.empty()) continue;
      write_text(out / ("dataset_" + std::string(to_string(task)) + "_" + metric + ".csv"),
                 analysis::records_to_csv(records));
    }
  }

  std::size_t incomplete = 0;
  for (const auto& o : outcomes) incomplete += o.metrics.complete ? 0 : 1;
  std::cout << outcomes.size() << " runs, " << incomplete << " incomplete, written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string log;
  std::string scene;
  std::string output;
  bool float32 = false;
};

int cmd_render(const Globals& g, const RenderArgs& a) {
  const SessionLog log = read_session_log(a.log);
  Scene scene;
  if (a.scene.empty()) {
    scene = log.header.task == TaskKind::Localization ? gen_localization(log.header.seed).scene()
                                                      : gen_navigation(log.header.seed).scene();
  } else {
    scene = scene_from_config(read_text(a.scene));
    if (!scene.meta.seed)
      throw DataError("scene " + a.scene + " carries no seed, so it cannot be matched to the log");
    if (*scene.meta.seed != log.header.seed)
      throw DataError("seed mismatch: log " + std::to_string(log.header.seed) + ", scene " +
                      std::to_string(*scene.meta.seed));
    if (!scene.meta.task.empty() && scene.meta.task != to_string(log.header.task))
      throw DataError("task mismatch: log " + std::string(to_string(log.header.task)) + ", scene " + scene.meta.task);
  }
  ReplayConfig rc;
  if (!g.config_path.empty()) {
    const SimConfig sc = batch::sim_config_from_json(load_config(g));
    SonificationEngine::Config ec = engine_config_for(log.header.task);
    ec.intrinsics = sc.intrinsics;
    ec.grid = sc.grid;
    ec.detect = sc.detect;
    rc.engine = ec;
  }
  const wav::Audio audio = render_offline_audio(log, scene, default_hrir_set(), rc);
  const fs::path path = a.output.empty() ? fs::path(g.out_dir) / (fs::path(a.log).stem().string() + ".wav")
                                         : fs::path(a.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  wav::write_file(path, audio, a.float32 ? wav::Encoding::Float32 : wav::Encoding::Pcm16);
  std::cout << path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::vector<std::string> inputs;
  std::string analysis = "rm-one";
  std::string metric = "value";
  std::string output;
  bool json_stdout = false;
};

int cmd_stats(const Globals& g, const StatsArgs& a) {
  std::vector<fs::path> logs, csvs;
  for (const std::string& in : a.inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".jsonl") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      logs.insert(logs.end(), found.begin(), found.end());
    } else if (p.extension() == ".csv") {
      csvs.push_back(p);
    } else if (p.extension() == ".jsonl") {
      logs.push_back(p);
    } else if (!fs::exists(p)) {
      throw DataError("no such input: " + in);
    } else {
      throw UsageError("inputs must be .csv datasets, .jsonl logs or directories of logs: " + in);
    }
  }
  if (!logs.empty() && !csvs.empty()) throw UsageError("mix of CSV datasets and session logs");
  if (logs.empty() && csvs.empty()) throw DataError("no session logs found in the inputs");

  json report;
  if (!csvs.empty()) {
    analysis::Analysis kind;
    try {
      kind = analysis::parse_analysis(a.analysis);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    std::vector<analysis::Record> records;
    for (const fs::path& p : csvs) {
      const auto part = analysis::records_from_csv(read_text(p));
      records.insert(records.end(), part.begin(), part.end());
    }
    report = analysis::dataset_report(records, kind, a.metric);
  } else {
    std::vector<SessionLog> loaded;
    for (const fs::path& p : logs) loaded.push_back(read_session_log(p));
    report = analysis::logs_report(loaded);
  }
  const fs::path path = a.output.empty() ? fs::path(g.out_dir) / "report.json" : fs::path(a.output);
  write_text(path, report.dump(2) + "\n");
  if (a.json_stdout) std::cout << report.dump(2) << "\n";
  else std::cout << analysis::report_table(report);
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  std::string group = "2D3D";
  int session = 1;
  std::string log_dir;
  double tick_hz = 30.0;
  bool verbose = false;
};

int cmd_serve(const Globals& g, const ServeArgs& a) {
  server::ServeOptions o;
  o.host = a.host;
  o.port = a.port;
  o.tick_hz = a.tick_hz;
  o.verbose = a.verbose;
  o.log_dir = a.log_dir.empty() ? fs::path(g.out_dir) / "sessions" : fs::path(a.log_dir);
  try {
    o.config.group = parse_group(a.group);
  } catch (const std::exception&) {
    throw UsageError("--group must be 2D3D or 3D2D");
  }
  if (a.session != 1 && a.session != 2) throw UsageError("--session must be 1 or 2");
  o.config.session_number = a.session;
  o.config.seed = g.seed.value_or(0);
  const json cfg = load_config(g);
  const SimConfig sc = batch::sim_config_from_json(cfg);
  o.config.intrinsics = sc.intrinsics;
  o.config.grid = sc.grid;
  o.config.collision_margin = sc.collision_margin;
  if (cfg.contains("server")) {
    const json& s = cfg["server"];
    for (const auto& [key, v] : s.items()) {
      if (key == "max_message_rate" && v.is_number() && v.get<double>() > 0) o.config.max_message_rate = v.get<double>();
      else throw DataError("config: bad key server." + key);
    }
  }

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  server::WebSocketServer server(o);
  std::cout << "listening on ws://" << o.host << ":" << server.port() << "  (" << server::kProtocol << ")"
            << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct HrirArgs {
  std::string output;
  int sample_rate = kSampleRate;
};

int cmd_gen_hrir(const Globals& g, const HrirArgs& a) {
  const std::array<double, 7> az{-60, -40, -20, 0, 20, 40, 60};
  const fs::path dir = a.output.empty() ? fs::path(g.out_dir) / "hrir" : fs::path(a.output);
  save_hrir(parametric_hrir(az, a.sample_rate), dir);
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echogrid: marker-to-sound encoder simulation, replay, statistics and live server"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON settings file (simulation, camera, grid, detection, server)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for scene generation, crossover cohorts and the server");
  app.add_option("--out-dir", g.out_dir, "Directory for generated files")->capture_default_str();

  GenSceneArgs gs;
  auto* gen = app.add_subcommand("gen-scene", "Write the scene of a seeded task layout");
  gen->add_option("--task", gs.task, "localization or navigation")->capture_default_str();
  gen->add_option("--course", gs.course, "Navigation course 1..3 (derives the layout seed from --seed)")
      ->check(CLI::Range(1, 3));
  gen->add_option("-o,--output", gs.output, "Output file (default: <out-dir>/scene-<task>-<seed>.json)");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run scripted agents over a seed batch or a crossover cohort");
  sim->add_option("--task", sa.task, "localization, navigation, or both (crossover only)");
  sim->add_option("--mode", sa.mode, "2d or 3d (ignored by --crossover)")->capture_default_str();
  sim->add_option("--agent", sa.agent, "sweep, updown or oracle (default: sweep / updown per task)");
  sim->add_option("--seeds", sa.seeds, "Seed list such as 0..9 or 1,4,7");
  sim->add_flag("--crossover", sa.crossover, "Two groups x two sessions with paired layouts, seeded by --seed");
  sim->add_option("--participants", sa.participants, "Cohort size for --crossover")
      ->capture_default_str()
      ->check(CLI::Range(2, 100000));

  RenderArgs ra;
  auto* ren = app.add_subcommand("render", "Render a session log to a binaural WAV file");
  ren->add_option("--log", ra.log, "Session log (.jsonl)")->required()->check(CLI::ExistingFile);
  ren->add_option("--scene", ra.scene, "Scene file; must carry the log's seed (default: regenerate from the log)")
      ->check(CLI::ExistingFile);
  ren->add_option("-o,--output", ra.output, "Output WAV (default: <out-dir>/<log name>.wav)");
  ren->add_flag("--float32", ra.float32, "Write 32-bit float samples instead of 16-bit PCM");

  StatsArgs st;
  auto* sts = app.add_subcommand("stats", "Boxplot summaries and ANOVA reports from logs or CSV datasets");
  sts->add_option("inputs", st.inputs, "Session logs, directories of logs, or CSV datasets")->required();
  sts->add_option("--analysis", st.analysis, "CSV only: rm-one, rm-two, between-two or pearson")
      ->capture_default_str();
  sts->add_option("--metric", st.metric, "CSV only: name recorded for the value column")->capture_default_str();
  sts->add_option("-o,--output", st.output, "Report file (default: <out-dir>/report.json)");
  sts->add_flag("--json", st.json_stdout, "Print the JSON report instead of the table");

  ServeArgs sv;
  auto* srv = app.add_subcommand("serve", "Run the live session server (WebSocket)");
  srv->add_option("--host", sv.host, "Bind address")->capture_default_str();
  srv->add_option("--port", sv.port, "TCP port (0 picks a free one)")->capture_default_str();
  srv->add_option("--group", sv.group, "Default group for new sessions: 2D3D or 3D2D")->capture_default_str();
  srv->add_option("--session", sv.session, "Default session number, 1 or 2")->capture_default_str();
  srv->add_option("--log-dir", sv.log_dir, "Where finished task logs go (default: <out-dir>/sessions)");
  srv->add_option("--tick-hz", sv.tick_hz, "Engine tick rate")->capture_default_str()->check(CLI::Range(1.0, 1000.0));
  srv->add_flag("-v,--verbose", sv.verbose, "Log connections and files to stderr");

  HrirArgs ha;
  auto* hr = app.add_subcommand("gen-hrir", "Write the parametric HRIR set (-60..60 degrees, 20 degree steps)");
  hr->add_option("-o,--output", ha.output, "Directory (default: <out-dir>/hrir)");
  hr->add_option("--sample-rate", ha.sample_rate, "Sample rate in Hz")->capture_default_str()->check(CLI::Range(8000, 192000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_scene(g, gs);
    if (*sim) return cmd_simulate(g, sa);
    if (*ren) return cmd_render(g, ra);
    if (*sts) return cmd_stats(g, st);
    if (*srv) return cmd_serve(g, sv);
    if (*hr) return cmd_gen_hrir(g, ha);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const StorageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
