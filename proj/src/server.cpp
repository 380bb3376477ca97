#include "echogrid/server.hpp"

#include "echogrid/simulation.hpp"
#include "json_fields.hpp"

#include <algorithm>
#include <cmath>

namespace echogrid::server {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::AwaitHello: return "await_hello";
    case Phase::Idle: return "idle";
    case Phase::LocRunning: return "localization_running";
    case Phase::LocDone: return "localization_done";
    case Phase::NavReady: return "navigation_ready";
    case Phase::NavRunning: return "navigation_running";
    case Phase::NavDone: return "navigation_done";
    case Phase::Finished: return "finished";
  }
  return "?";
}

int progress_rank(Phase phase, int course) {
  const int c = std::max(course, 1) - 1;
  switch (phase) {
    case Phase::AwaitHello: return 0;
    case Phase::Idle: return 1;
    case Phase::LocRunning: return 2;
    case Phase::LocDone: return 3;
    case Phase::NavReady: return 4 + 3 * c;
    case Phase::NavRunning: return 5 + 3 * c;
    case Phase::NavDone: return 6 + 3 * c;
    case Phase::Finished: return 13;
  }
  return -1;
}

SessionState::SessionState(ServerConfig cfg, std::string id)
    : config(std::move(cfg)), session_id(std::move(id)), group(config.group),
      session_number(config.session_number), seed(config.seed) {}

std::string SessionState::digest() const {
  json j;
  j["phase"] = to_string(phase);
  j["course"] = course;
  j["participant"] = participant_id;
  j["group"] = to_string(group);
  j["session"] = session_number;
  j["seed"] = seed;
  j["mode"] = to_string(mode);
  j["pcm"] = pcm;
  j["submissions"] = submissions;
  j["inside"] = inside_obstacle;
  j["engine_mode"] = engine ? json(to_string(engine->mode())) : json();
  j["last_client_t"] = last_client_t ? json(*last_client_t) : json();
  if (pose) j["pose"] = {pose->position.x(), pose->position.y(), pose->position.z(), pose->yaw_deg, pose->pitch_deg};
  j["log"] = to_jsonl(log);
  return j.dump();
}

namespace {

struct Reject {
  std::string_view code;
  std::string message;
  bool close = false;
};

json error_message(const Reject& r) {
  return {{"type", "error"}, {"code", r.code}, {"message", r.message}};
}

bool running(Phase p) { return p == Phase::LocRunning || p == Phase::NavRunning; }

const Scene* current_scene(const SessionState& s) { return s.engine ? &s.engine->scene() : nullptr; }

json notes_table() {
  json notes = json::array();
  for (int row = 0; row < CellGrid::kRows; ++row) {
    const NoteSpec n = note_for_row(row);
    notes.push_back({{"row", row}, {"name", to_string(n.name)}, {"frequency_hz", n.frequency_hz}});
  }
  return notes;
}

std::uint64_t task_seed(const SessionState& s) {
  if (s.phase == Phase::Idle || s.phase == Phase::LocRunning || s.phase == Phase::LocDone) return s.seed;
  if (s.course >= 1) return course_seed(s.seed, s.course);
  return s.seed;
}

json task_state_message(const SessionState& s, bool with_scene) {
  json j{{"type", "task_state"},
         {"phase", to_string(s.phase)},
         {"course", s.course},
         {"mode", to_string(s.mode)},
         {"group", to_string(s.group)},
         {"session_number", s.session_number},
         {"seed", task_seed(s)},
         {"submissions", s.submissions}};
  const bool nav = s.phase == Phase::NavReady || s.phase == Phase::NavRunning || s.phase == Phase::NavDone;
  j["task"] = s.phase == Phase::Finished ? json() : json(nav ? "navigation" : "localization");
  if (with_scene && current_scene(s)) j["scene"] = scene_to_json(*current_scene(s));
  return j;
}

void load_scene(SessionState& s, const Scene& scene, TaskKind kind) {
  SonificationEngine::Config c = engine_config_for(kind);
  c.intrinsics = s.config.intrinsics;
  c.grid = s.config.grid;
  s.engine.emplace(scene, c, s.mode);
  s.pose.reset();
  s.emitted = false;
  s.pending = false;
  s.last_cells = json();
}

double last_log_time(const SessionState& s) { return s.log.events.empty() ? -INFINITY : s.log.events.back().t; }

/// Validated event time; does not touch the state.
double event_time(const SessionState& s, const json& msg, double now, bool required) {
  if (!msg.contains("t")) {
    if (required) throw Reject{code::kPayload, "field 't': missing"};
    return std::max(now, last_log_time(s));
  }
  double t = 0.0;
  try {
    t = detail::number_field(msg, "t", "");
  } catch (const DataError& e) {
    throw Reject{code::kPayload, e.what()};
  }
  if (s.last_client_t && t < *s.last_client_t)
    throw Reject{code::kTime, "timestamp " + std::to_string(t) + " precedes the previous client timestamp"};
  if (t < last_log_time(s)) throw Reject{code::kTime, "timestamp precedes the last logged event"};
  return t;
}

void note_client_time(SessionState& s, const json& msg, double t) {
  if (msg.contains("t")) s.last_client_t = t;
}

template <class F>
auto payload(F&& f) {
  try {
    return f();
  } catch (const DataError& e) {
    throw Reject{code::kPayload, e.what()};
  } catch (const std::invalid_argument& e) {
    throw Reject{code::kPayload, e.what()};
  }
}

void begin_task(SessionState& s, double t) {
  s.log = SessionLog{};
  SessionHeader& h = s.log.header;
  h.participant_id = s.participant_id;
  h.group = s.group;
  h.session_number = s.session_number;
  h.mode = s.mode;
  h.task = s.phase == Phase::LocRunning ? TaskKind::Localization : TaskKind::Navigation;
  h.seed = task_seed(s);
  h.course = h.task == TaskKind::Navigation ? s.course : 0;
  h.agent = "human";
  h.session_id = s.session_id;
  s.log.append(t, event::ModeSet{s.mode});
  s.log.append(t, event::TaskStart{});
  s.submissions = 0;
  if (s.navigation) s.inside_obstacle.assign(s.navigation->obstacles.size(), false);
}

json localization_result(const SessionState& s) {
  const LocalizationResult r = judge_localization(s.log, *s.localization);
  json objects = json::array();
  for (const ObjectScore& o : r.objects)
    objects.push_back({{"object_id", o.object_id},
                       {"label", s.localization->object(o.object_id).label},
                       {"time_to_find", o.time_to_find},
                       {"error_distance", o.error_distance}});
  return {{"type", "result"}, {"task", "localization"}, {"total_time", r.total_time}, {"objects", objects}};
}

json navigation_result(const SessionState& s) {
  const NavigationResult r = judge_obstacles(s.log, *s.navigation);
  json obstacles = json::array();
  for (std::size_t i = 0; i < r.verdicts.size(); ++i)
    obstacles.push_back({{"index", s.navigation->obstacles[i].index},
                         {"label", s.navigation->obstacles[i].label},
                         {"verdict", to_string(r.verdicts[i])}});
  return {{"type", "result"},    {"task", "navigation"},          {"course", s.course},
          {"course_time", r.course_time}, {"missed_count", r.missed_count}, {"obstacles", obstacles}};
}

void end_task(SessionState& s, double t, Output& out) {
  s.log.append(t, event::TaskEnd{});
  s.log.header.complete = true;
  if (s.phase == Phase::LocRunning) {
    s.phase = Phase::LocDone;
    out.messages.push_back(localization_result(s));
  } else {
    s.phase = Phase::NavDone;
    out.messages.push_back(navigation_result(s));
  }
  out.finished_logs.push_back(s.log);
  out.messages.push_back(task_state_message(s, false));
}

void on_hello(SessionState& s, const json& msg, Output& out) {
  if (s.phase != Phase::AwaitHello) throw Reject{code::kPhase, "handshake already completed"};
  std::string protocol;
  try {
    protocol = detail::string_field(msg, "protocol", "");
  } catch (const DataError& e) {
    throw Reject{code::kVersion, e.what(), true};
  }
  if (protocol != kProtocol)
    throw Reject{code::kVersion, "unsupported protocol '" + protocol + "', expected " + std::string(kProtocol), true};

  std::string participant = s.participant_id;
  Group group = s.config.group;
  int session_number = s.config.session_number;
  std::uint64_t seed = s.config.seed;
  bool pcm = false;
  payload([&] {
    if (msg.contains("participant_id")) participant = detail::string_field(msg, "participant_id", "");
    if (msg.contains("group")) group = parse_group(detail::string_field(msg, "group", ""));
    if (msg.contains("session_number")) {
      const json& v = msg["session_number"];
      if (!v.is_number_integer() || (v.get<int>() != 1 && v.get<int>() != 2))
        detail::field_error("session_number", "expected 1 or 2");
      session_number = v.get<int>();
    }
    if (msg.contains("seed")) {
      const json& v = msg["seed"];
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        detail::field_error("seed", "expected a non-negative integer");
      seed = v.get<std::uint64_t>();
    }
    if (msg.contains("pcm")) {
      if (!msg["pcm"].is_boolean()) detail::field_error("pcm", "expected a boolean");
      pcm = msg["pcm"].get<bool>();
    }
    return 0;
  });

  s.participant_id = participant;
  s.group = group;
  s.session_number = session_number;
  s.seed = seed;
  s.pcm = pcm;
  s.mode = mode_for(group, session_number);
  s.localization = gen_localization(seed);
  s.phase = Phase::Idle;
  load_scene(s, s.localization->scene(), TaskKind::Localization);

  json azimuths = json::array();
  for (double a : s.config.grid.azimuths_deg) azimuths.push_back(a);
  out.messages.push_back({{"type", "welcome"},
                          {"protocol", kProtocol},
                          {"session_id", s.session_id},
                          {"phase", to_string(s.phase)},
                          {"mode", to_string(s.mode)},
                          {"group", to_string(s.group)},
                          {"session_number", s.session_number},
                          {"participant_id", s.participant_id},
                          {"pcm", s.pcm},
                          {"scene", scene_to_json(*current_scene(s))},
                          {"grid", {{"rows", CellGrid::kRows}, {"cols", CellGrid::kCols}}},
                          {"azimuths", azimuths},
                          {"notes", notes_table()}});
}

void on_set_mode(SessionState& s, const json& msg, double now, Output& out) {
  Mode mode = Mode::TwoD;
  try {
    mode = parse_mode(detail::string_field(msg, "mode", ""));
  } catch (const std::exception& e) {
    throw Reject{code::kMode, e.what()};
  }
  if (s.phase != Phase::Idle) throw Reject{code::kPhase, "the mode is fixed once the session's first task has started"};
  const double t = event_time(s, msg, now, false);
  note_client_time(s, msg, t);
  s.mode = mode;
  s.engine->set_mode(mode);
  out.messages.push_back(task_state_message(s, false));
}

void on_task_control(SessionState& s, const json& msg, double now, Output& out) {
  const std::string action = payload([&] { return detail::string_field(msg, "action", ""); });
  if (action != "start" && action != "end" && action != "next")
    throw Reject{code::kPayload, "field 'action': expected start, end or next"};
  const Phase p = s.phase;
  const bool ok = (action == "start" && (p == Phase::Idle || p == Phase::NavReady)) ||
                  (action == "end" && running(p)) || (action == "next" && (p == Phase::LocDone || p == Phase::NavDone));
  if (!ok) throw Reject{code::kPhase, "'" + action + "' is not allowed in phase " + std::string(to_string(p))};
  const double t = event_time(s, msg, now, false);
  note_client_time(s, msg, t);

  if (action == "start") {
    s.phase = p == Phase::Idle ? Phase::LocRunning : Phase::NavRunning;
    begin_task(s, t);
    out.messages.push_back(task_state_message(s, false));
  } else if (action == "end") {
    end_task(s, t, out);
  } else if (p == Phase::NavDone && s.course == 3) {
    s.phase = Phase::Finished;
    out.messages.push_back(task_state_message(s, false));
  } else {
    s.course = p == Phase::LocDone ? 1 : s.course + 1;
    s.phase = Phase::NavReady;
    s.navigation = gen_navigation(course_seed(s.seed, s.course));
    load_scene(s, s.navigation->scene(), TaskKind::Navigation);
    out.messages.push_back(task_state_message(s, true));
  }
}

void on_pose(SessionState& s, const json& msg, double now, Output& out) {
  const CameraPose pose = payload([&] {
    const Vec3 position = detail::vec3_field(msg, "position", "");
    return make_pose(position, detail::number_field(msg, "yaw", ""), detail::number_field(msg, "pitch", ""));
  });
  const double t = event_time(s, msg, now, true);
  note_client_time(s, msg, t);
  s.pose = pose;
  if (!running(s.phase)) return;
  s.log.append(t, event::Pose{pose});
  if (s.phase != Phase::NavRunning) return;
  const Vec2 xz(pose.position.x(), pose.position.z());
  for (const Obstacle& o : s.navigation->obstacles) {
    const auto i = static_cast<std::size_t>(o.index);
    const bool in = (xz - o.position).norm() < o.radius + s.config.collision_margin;
    if (in && !s.inside_obstacle[i]) s.log.append(t, event::Collision{o.index});
    s.inside_obstacle[i] = in;
  }
  if (pose.position.z() >= s.navigation->corridor.finish_z) end_task(s, t, out);
}

void on_point_submit(SessionState& s, const json& msg, double now, Output& out) {
  const Vec2 p = payload([&] { return Vec2(detail::number_field(msg, "x", ""), detail::number_field(msg, "z", "")); });
  if (s.phase != Phase::LocRunning) throw Reject{code::kPhase, "point_submit needs a running localization task"};
  const double t = event_time(s, msg, now, false);
  note_client_time(s, msg, t);
  s.log.append(t, event::PointSubmit{p.x(), p.y()});
  if (++s.submissions == static_cast<int>(s.localization->objects.size())) end_task(s, t, out);
  else out.messages.push_back(task_state_message(s, false));
}

void on_obstacle_report(SessionState& s, const json& msg, double now, Output&) {
  const Vec2 p = payload([&] {
    const json& v = detail::require(msg, "position", "");
    if (!v.is_array() || v.size() != 2) detail::field_error("position", "expected [x, z]");
    return Vec2(detail::as_number(v[0], "position"), detail::as_number(v[1], "position"));
  });
  if (s.phase != Phase::NavRunning) throw Reject{code::kPhase, "obstacle_report needs a running navigation course"};
  const double t = event_time(s, msg, now, false);
  note_client_time(s, msg, t);
  s.log.append(t, event::ObstacleReport{p.x(), p.y()});
}

}  // namespace

Output handle_message(SessionState& state, const json& message, double now) {
  Output out;
  try {
    if (!message.is_object()) throw Reject{code::kPayload, "message must be a JSON object"};
    const auto type_it = message.find("type");
    if (type_it == message.end() || !type_it->is_string()) throw Reject{code::kPayload, "field 'type': missing"};
    const std::string type = type_it->get<std::string>();
    if (type == "hello") {
      on_hello(state, message, out);
      return out;
    }
    if (state.phase == Phase::AwaitHello) throw Reject{code::kHandshake, "send hello first"};
    if (type == "pose") on_pose(state, message, now, out);
    else if (type == "set_mode") on_set_mode(state, message, now, out);
    else if (type == "task_control") on_task_control(state, message, now, out);
    else if (type == "point_submit") on_point_submit(state, message, now, out);
    else if (type == "obstacle_report") on_obstacle_report(state, message, now, out);
    else throw Reject{code::kPayload, "unknown message type '" + type + "'"};
  } catch (const Reject& r) {
    out = Output{};
    out.messages.push_back(error_message(r));
    out.close = r.close;
  }
  return out;
}

Output handle_text(SessionState& state, std::string_view text, double now) {
  json msg;
  try {
    msg = detail::parse_document(text);
  } catch (const DataError& e) {
    Output out;
    out.messages.push_back(error_message({code::kPayload, e.what()}));
    return out;
  }
  return handle_message(state, msg, now);
}

json active_cells_message(const ActiveCellSet& set, const CellGrid& grid) {
  json cells = json::array();
  for (const CellActivation& a : set.activations) {
    const NoteSpec n = note_for_cell(a.cell, grid);
    cells.push_back({{"row", a.cell.row},
                     {"col", a.cell.col},
                     {"note_hz", n.frequency_hz},
                     {"azimuth_deg", n.azimuth_deg},
                     {"period_s", a.period},
                     {"marker_id", a.marker_id}});
  }
  return {{"type", "active_cells"}, {"t", set.timestamp}, {"mode", to_string(set.mode)}, {"cells", cells}};
}

std::optional<json> tick(SessionState& state, double now) {
  if (!state.engine) return std::nullopt;
  const double t = std::max(now, state.engine->state().timestamp);
  const ActiveCellSet& set = state.engine->step(state.pose, t);
  json signature = json::array();
  for (const CellActivation& a : set.activations)
    signature.push_back({a.cell.row, a.cell.col, a.marker_id, a.first_seen, a.loops_completed, a.period});
  if (!state.emitted || signature != state.last_cells) state.pending = true;
  state.last_cells = std::move(signature);
  if (!state.pending) return std::nullopt;
  const double min_gap = 1.0 / state.config.max_message_rate;
  if (state.emitted && t - state.last_emit < min_gap - 1e-9) return std::nullopt;
  state.pending = false;
  state.emitted = true;
  state.last_emit = t;
  return active_cells_message(set, state.config.grid);
}

Output abort_session(SessionState& state) {
  Output out;
  if (running(state.phase)) {
    state.log.header.complete = false;
    out.finished_logs.push_back(state.log);
  }
  state.phase = Phase::Finished;
  return out;
}

std::filesystem::path persist(const SessionLog& log, const std::filesystem::path& dir) {
  std::string id = log.header.session_id.empty() ? "session" : log.header.session_id;
  for (char& c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  std::string name = id + "-" + std::string(to_string(log.header.task));
  if (log.header.task == TaskKind::Navigation) name += "-c" + std::to_string(log.header.course);
  const auto path = dir / (name + ".jsonl");
  write_session_log_atomic(log, path);
  return path;
}

}  // namespace echogrid::server
