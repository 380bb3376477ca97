#include "echogrid/batch.hpp"

#include "echogrid/error.hpp"

#include <charconv>
#include <stdexcept>

namespace echogrid::batch {

namespace {

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw std::invalid_argument("bad seed '" + std::string(text) + "'");
  return v;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string_view item = text.substr(pos, comma - pos);
    if (const auto dots = item.find(".."); dots != std::string_view::npos) {
      const std::uint64_t lo = parse_u64(item.substr(0, dots));
      const std::uint64_t hi = parse_u64(item.substr(dots + 2));
      if (hi < lo) throw std::invalid_argument("empty seed range '" + std::string(item) + "'");
      if (hi - lo >= 1'000'000) throw std::invalid_argument("seed range too large '" + std::string(item) + "'");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(parse_u64(item));
    }
    pos = comma + 1;
  }
  return seeds;
}

AgentKind default_agent(TaskKind task) {
  return task == TaskKind::Localization ? AgentKind::Sweep : AgentKind::UpDownRanger;
}

std::vector<RunSpec> plan_batch(TaskKind task, Mode mode, AgentKind agent, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  std::vector<RunSpec> out;
  for (std::uint64_t s : seeds) {
    RunSpec r;
    r.mode = mode;
    r.task = task;
    r.course = task == TaskKind::Navigation ? 1 : 0;
    r.seed = s;
    r.base_seed = s;
    r.agent = agent;
    out.push_back(r);
  }
  return out;
}

std::vector<RunSpec> plan_crossover(const CrossoverOptions& o) {
  if (o.participants < 2) throw std::invalid_argument("a crossover needs at least two participants");
  if (!o.localization && !o.navigation) throw std::invalid_argument("a crossover needs at least one task");
  const int width = std::max<int>(2, static_cast<int>(std::to_string(o.participants).size()));
  std::vector<RunSpec> out;
  for (int i = 0; i < o.participants; ++i) {
    std::string id = std::to_string(i + 1);
    id = "p" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    const Group group = i % 2 == 0 ? Group::G2D3D : Group::G3D2D;
    const std::uint64_t base = o.base_seed + static_cast<std::uint64_t>(i);
    for (int session = 1; session <= 2; ++session) {
      RunSpec r;
      r.participant = id;
      r.group = group;
      r.session = session;
      r.mode = mode_for(group, session);
      r.base_seed = base;
      if (o.localization) {
        r.task = TaskKind::Localization;
        r.course = 0;
        r.seed = base;
        r.agent = o.localization_agent.value_or(default_agent(TaskKind::Localization));
        out.push_back(r);
      }
      if (o.navigation) {
        r.task = TaskKind::Navigation;
        r.agent = o.navigation_agent.value_or(default_agent(TaskKind::Navigation));
        for (int c = 1; c <= 3; ++c) {
          r.course = c;
          r.seed = course_seed(base, c);
          out.push_back(r);
        }
      }
    }
  }
  return out;
}

RunOutcome run(const RunSpec& spec, const SimConfig& config) {
  RunOutcome out{spec, {}, {}};
  out.log = spec.task == TaskKind::Localization
                ? run_scripted(spec.agent, gen_localization(spec.seed), spec.mode, spec.seed, config)
                : run_scripted(spec.agent, gen_navigation(spec.seed), spec.mode, spec.seed, config);
  SessionHeader& h = out.log.header;
  h.participant_id = spec.participant;
  h.group = spec.group;
  h.session_number = spec.session;
  h.course = spec.course;
  out.metrics = analysis::evaluate(out.log);
  return out;
}

std::vector<RunOutcome> run_all(std::span<const RunSpec> specs, const SimConfig& config) {
  std::vector<RunOutcome> out;
  out.reserve(specs.size());
  for (const RunSpec& s : specs) out.push_back(run(s, config));
  return out;
}

std::string log_file_name(const RunSpec& spec) {
  const std::string task(to_string(spec.task));
  if (spec.participant.empty()) return task + "-" + std::to_string(spec.seed) + ".jsonl";
  std::string name = spec.participant + "-s" + std::to_string(spec.session) + "-" + task;
  if (spec.task == TaskKind::Navigation) name += "-c" + std::to_string(spec.course);
  return name + ".jsonl";
}

std::string summary_csv(std::span<const RunOutcome> outcomes) {
  using analysis::format_number;
  std::string out = analysis::csv_row(std::vector<std::string>{"participant", "group", "session", "mode", "task", "course",
                                                               "seed", "agent", "complete", "time_s", "mean_error_m",
                                                               "missed"});
  for (const RunOutcome& o : outcomes) {
    const RunSpec& s = o.spec;
    const bool cohort = !s.participant.empty();
    const analysis::Metrics& m = o.metrics;
    out += analysis::csv_row(std::vector<std::string>{
        s.participant, cohort ? std::string(to_string(s.group)) : "", cohort ? std::to_string(s.session) : "",
        std::string(to_string(s.mode)), std::string(to_string(s.task)), s.course ? std::to_string(s.course) : "",
        std::to_string(s.seed), std::string(to_string(s.agent)), m.complete ? "true" : "false",
        m.complete ? format_number(m.time) : "", m.mean_error ? format_number(*m.mean_error) : "",
        m.missed ? std::to_string(*m.missed) : ""});
  }
  return out;
}

json summary_json(std::span<const RunOutcome> outcomes) {
  json runs = json::array();
  for (const RunOutcome& o : outcomes) {
    const RunSpec& s = o.spec;
    json r{{"mode", to_string(s.mode)},   {"task", to_string(s.task)},  {"seed", s.seed},
           {"agent", to_string(s.agent)}, {"complete", o.metrics.complete}, {"log", log_file_name(s)}};
    if (!s.participant.empty()) {
      r["participant"] = s.participant;
      r["group"] = to_string(s.group);
      r["session"] = s.session;
    }
    if (s.course) r["course"] = s.course;
    if (o.metrics.complete) r["time_s"] = o.metrics.time;
    if (o.metrics.mean_error) {
      r["mean_error_m"] = *o.metrics.mean_error;
      r["errors_m"] = o.metrics.errors;
    }
    if (o.metrics.missed) r["missed"] = *o.metrics.missed;
    runs.push_back(std::move(r));
  }
  return {{"schema", "echogrid-summary/1"}, {"runs", runs}};
}

std::vector<analysis::Record> dataset(std::span<const RunOutcome> outcomes, TaskKind task, std::string_view metric) {
  std::vector<analysis::Record> out;
  for (const RunOutcome& o : outcomes) {
    const RunSpec& s = o.spec;
    if (s.task != task || !o.metrics.complete) continue;
    const std::string subject = s.participant.empty() ? "seed" + std::to_string(s.base_seed) : s.participant;
    const std::string mode(to_string(s.mode));
    std::optional<double> v;
    if (metric == "mean_error_m") v = o.metrics.mean_error;
    else if (metric == "time_s" || metric == "course_time_s") v = o.metrics.time;
    else if (metric == "missed" && o.metrics.missed) v = *o.metrics.missed;
    else throw std::invalid_argument("unknown metric '" + std::string(metric) + "'");
    if (!v) continue;
    const std::string f2 = task == TaskKind::Localization ? std::string(to_string(s.group)) : "course" + std::to_string(s.course);
    out.push_back({subject, mode, f2, *v});
  }
  return out;
}

namespace {

double number_field(const json& obj, const char* key, const std::string& section) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw DataError("config: " + section + "." + key + " must be a number");
  return v.get<double>();
}

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw DataError("config: " + section + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw DataError("config: unknown key " + section + "." + key);
  }
}

}  // namespace

SimConfig sim_config_from_json(const json& doc) {
  SimConfig c;
  check_keys(doc, "config", {"simulation", "camera", "grid", "detection", "server"});
  if (doc.contains("simulation")) {
    const json& s = doc["simulation"];
    check_keys(s, "simulation", {"tick_hz", "max_seconds", "pointing_sigma_deg", "hand_speed", "walk_speed",
                                 "turn_rate_deg", "device_height", "collision_margin"});
    auto set = [&](const char* key, double& dst) {
      if (s.contains(key)) dst = number_field(s, key, "simulation");
    };
    set("tick_hz", c.tick_hz);
    set("max_seconds", c.max_seconds);
    set("pointing_sigma_deg", c.pointing_sigma_deg);
    set("hand_speed", c.hand_speed);
    set("walk_speed", c.walk_speed);
    set("turn_rate_deg", c.turn_rate_deg);
    set("device_height", c.device_height);
    set("collision_margin", c.collision_margin);
    if (c.tick_hz <= 0 || c.hand_speed <= 0 || c.walk_speed <= 0 || c.turn_rate_deg <= 0 || c.max_seconds < 0 ||
        c.pointing_sigma_deg < 0)
      throw DataError("config: simulation rates and speeds must be positive");
  }
  if (doc.contains("camera")) {
    const json& cam = doc["camera"];
    check_keys(cam, "camera", {"h_fov_deg", "v_fov_deg"});
    if (cam.contains("h_fov_deg")) c.intrinsics.h_fov_deg = number_field(cam, "h_fov_deg", "camera");
    if (cam.contains("v_fov_deg")) c.intrinsics.v_fov_deg = number_field(cam, "v_fov_deg", "camera");
    if (!(c.intrinsics.h_fov_deg > 0 && c.intrinsics.h_fov_deg < 180 && c.intrinsics.v_fov_deg > 0 &&
          c.intrinsics.v_fov_deg < 180))
      throw DataError("config: camera field of view must lie in (0, 180) degrees");
  }
  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    check_keys(g, "grid", {"azimuths_deg"});
    if (g.contains("azimuths_deg")) {
      const json& a = g["azimuths_deg"];
      if (!a.is_array() || a.size() != CellGrid::kCols) throw DataError("config: grid.azimuths_deg needs 5 numbers");
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw DataError("config: grid.azimuths_deg needs 5 numbers");
        c.grid.azimuths_deg[i] = a[i].get<double>();
      }
    }
    try {
      validate(c.grid);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("config: ") + e.what());
    }
  }
  if (doc.contains("detection")) {
    const json& d = doc["detection"];
    check_keys(d, "detection", {"occlusion"});
    if (d.contains("occlusion")) {
      if (!d["occlusion"].is_boolean()) throw DataError("config: detection.occlusion must be a boolean");
      c.detect.occlusion = d["occlusion"].get<bool>();
    }
  }
  return c;
}

}  // namespace echogrid::batch
