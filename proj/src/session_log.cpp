#include "echogrid/session_log.hpp"

#include "echogrid/error.hpp"
#include "json_fields.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace echogrid {

using detail::json;

namespace {

std::string lowercase(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::string_view to_string(TaskKind kind) { return kind == TaskKind::Localization ? "localization" : "navigation"; }

std::string_view to_string(Group group) { return group == Group::G2D3D ? "2D3D" : "3D2D"; }

TaskKind parse_task_kind(std::string_view text) {
  const std::string s = lowercase(text);
  if (s == "localization" || s == "loc") return TaskKind::Localization;
  if (s == "navigation" || s == "nav") return TaskKind::Navigation;
  throw std::invalid_argument("unknown task '" + std::string(text) + "'");
}

Group parse_group(std::string_view text) {
  std::string s = lowercase(text);
  if (s.starts_with("group")) s = s.substr(5);
  if (!s.empty() && s.front() == '_') s = s.substr(1);
  if (s == "2d3d") return Group::G2D3D;
  if (s == "3d2d") return Group::G3D2D;
  throw std::invalid_argument("unknown group '" + std::string(text) + "'");
}

Mode mode_for(Group group, int session_number) {
  if (session_number != 1 && session_number != 2) throw std::invalid_argument("session number must be 1 or 2");
  const bool first = session_number == 1;
  if (group == Group::G2D3D) return first ? Mode::TwoD : Mode::ThreeD;
  return first ? Mode::ThreeD : Mode::TwoD;
}

std::string_view kind_name(const EventPayload& payload) {
  return std::visit(overloaded{[](const event::Pose&) { return std::string_view("pose"); },
                               [](const event::PointSubmit&) { return std::string_view("point_submit"); },
                               [](const event::ObstacleReport&) { return std::string_view("obstacle_report"); },
                               [](const event::ModeSet&) { return std::string_view("mode_set"); },
                               [](const event::TaskStart&) { return std::string_view("task_start"); },
                               [](const event::TaskEnd&) { return std::string_view("task_end"); },
                               [](const event::Collision&) { return std::string_view("collision"); }},
                    payload);
}

void SessionLog::append(double t, EventPayload payload) {
  if (!std::isfinite(t)) throw std::invalid_argument("event time must be finite");
  if (!events.empty() && t < events.back().t) throw std::invalid_argument("event timestamps must be non-decreasing");
  events.push_back({t, std::move(payload)});
}

std::optional<double> SessionLog::start_time() const {
  for (const auto& e : events)
    if (std::holds_alternative<event::TaskStart>(e.payload)) return e.t;
  return std::nullopt;
}

std::optional<double> SessionLog::end_time() const {
  for (const auto& e : events)
    if (std::holds_alternative<event::TaskEnd>(e.payload)) return e.t;
  return std::nullopt;
}

bool SessionLog::has_complete_events() const {
  int starts = 0, ends = 0;
  bool ordered = true;
  for (const auto& e : events) {
    if (std::holds_alternative<event::TaskStart>(e.payload)) ++starts;
    if (std::holds_alternative<event::TaskEnd>(e.payload)) {
      ++ends;
      if (starts == 0) ordered = false;
    }
  }
  return starts == 1 && ends == 1 && ordered;
}

namespace {

json header_to_json(const SessionHeader& h) {
  json j;
  j["schema"] = kLogSchema;
  j["participant_id"] = h.participant_id;
  j["group"] = to_string(h.group);
  j["session_number"] = h.session_number;
  j["mode"] = to_string(h.mode);
  j["task"] = to_string(h.task);
  j["seed"] = h.seed;
  j["course"] = h.course;
  j["complete"] = h.complete;
  if (!h.agent.empty()) j["agent"] = h.agent;
  if (!h.session_id.empty()) j["session_id"] = h.session_id;
  if (!h.free_text.empty()) j["free_text"] = h.free_text;
  return j;
}

json event_to_json(const SessionEvent& e) {
  json j;
  j["t"] = e.t;
  j["kind"] = kind_name(e.payload);
  std::visit(overloaded{[&](const event::Pose& p) {
                          j["position"] = detail::to_json(p.pose.position);
                          j["yaw"] = p.pose.yaw_deg;
                          j["pitch"] = p.pose.pitch_deg;
                        },
                        [&](const event::PointSubmit& p) {
                          j["x"] = p.x;
                          j["z"] = p.z;
                        },
                        [&](const event::ObstacleReport& r) { j["position"] = json::array({r.x, r.z}); },
                        [&](const event::ModeSet& m) { j["mode"] = to_string(m.mode); },
                        [](const event::TaskStart&) {}, [](const event::TaskEnd&) {},
                        [&](const event::Collision& c) { j["obstacle"] = c.obstacle; }},
             e.payload);
  return j;
}

SessionHeader header_from_json(const json& j) {
  const std::string schema = detail::string_field(j, "schema", "");
  if (schema != kLogSchema) detail::field_error("schema", "unsupported log schema '" + schema + "'");
  SessionHeader h;
  h.participant_id = detail::string_field(j, "participant_id", "");
  try {
    h.group = parse_group(detail::string_field(j, "group", ""));
    h.mode = parse_mode(detail::string_field(j, "mode", ""));
    h.task = parse_task_kind(detail::string_field(j, "task", ""));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  const json& session = detail::require(j, "session_number", "");
  if (!session.is_number_integer() || (session.get<int>() != 1 && session.get<int>() != 2))
    detail::field_error("session_number", "expected 1 or 2");
  h.session_number = session.get<int>();
  const json& seed = detail::require(j, "seed", "");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
    detail::field_error("seed", "expected a non-negative integer");
  h.seed = seed.get<std::uint64_t>();
  if (j.contains("course")) {
    if (!j["course"].is_number_integer()) detail::field_error("course", "expected an integer");
    h.course = j["course"].get<int>();
  }
  if (j.contains("complete")) {
    if (!j["complete"].is_boolean()) detail::field_error("complete", "expected a boolean");
    h.complete = j["complete"].get<bool>();
  }
  if (j.contains("agent")) h.agent = detail::string_field(j, "agent", "");
  if (j.contains("session_id")) h.session_id = detail::string_field(j, "session_id", "");
  if (j.contains("free_text")) h.free_text = detail::string_field(j, "free_text", "");
  return h;
}

SessionEvent event_from_json(const json& j) {
  SessionEvent e;
  e.t = detail::number_field(j, "t", "");
  const std::string kind = detail::string_field(j, "kind", "");
  if (kind == "pose") {
    CameraPose pose;
    pose.position = detail::vec3_field(j, "position", "");
    pose.yaw_deg = detail::number_field(j, "yaw", "");
    pose.pitch_deg = detail::number_field(j, "pitch", "");
    try {
      pose = make_pose(pose.position, pose.yaw_deg, pose.pitch_deg);
    } catch (const std::invalid_argument& err) {
      throw DataError(err.what());
    }
    e.payload = event::Pose{pose};
  } else if (kind == "point_submit") {
    e.payload = event::PointSubmit{detail::number_field(j, "x", ""), detail::number_field(j, "z", "")};
  } else if (kind == "obstacle_report") {
    const json& p = detail::require(j, "position", "");
    if (!p.is_array() || p.size() != 2) detail::field_error("position", "expected [x, z]");
    e.payload = event::ObstacleReport{detail::as_number(p[0], "position"), detail::as_number(p[1], "position")};
  } else if (kind == "mode_set") {
    try {
      e.payload = event::ModeSet{parse_mode(detail::string_field(j, "mode", ""))};
    } catch (const std::invalid_argument& err) {
      throw DataError(err.what());
    }
  } else if (kind == "task_start") {
    e.payload = event::TaskStart{};
  } else if (kind == "task_end") {
    e.payload = event::TaskEnd{};
  } else if (kind == "collision") {
    const json& o = detail::require(j, "obstacle", "");
    if (!o.is_number_integer()) detail::field_error("obstacle", "expected an integer");
    e.payload = event::Collision{o.get<int>()};
  } else {
    detail::field_error("kind", "unknown event kind '" + kind + "'");
  }
  return e;
}

}  // namespace

std::string to_jsonl(const SessionLog& log) {
  std::string out = header_to_json(log.header).dump() + "\n";
  for (const auto& e : log.events) out += event_to_json(e).dump() + "\n";
  return out;
}

SessionLog session_log_from_jsonl(std::string_view text) {
  SessionLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = detail::parse_document(line);
      if (!have_header) {
        log.header = header_from_json(j);
        have_header = true;
      } else {
        SessionEvent e = event_from_json(j);
        if (!log.events.empty() && e.t < log.events.back().t) throw DataError("timestamps must be non-decreasing");
        log.events.push_back(std::move(e));
      }
    } catch (const DataError& e) {
      throw DataError("log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw DataError("log is empty (no header line)");
  if (log.header.complete && !log.has_complete_events())
    throw DataError("log is flagged complete but lacks exactly one task_start and task_end");
  return log;
}

SessionLog read_session_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open log " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return session_log_from_jsonl(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_session_log_atomic(const SessionLog& log, const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << to_jsonl(log);
    out.flush();
    if (!out) throw StorageError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot move log into place at " + path.string() + ": " + ec.message());
}

}  // namespace echogrid
