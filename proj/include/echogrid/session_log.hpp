#pragma once

// Recorded task sessions, stored as JSON lines: a header object on the first
// line followed by one event per line.

#include "echogrid/encoder.hpp"
#include "echogrid/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace echogrid {

enum class TaskKind { Localization, Navigation };
enum class Group { G2D3D, G3D2D };

std::string_view to_string(TaskKind kind);
std::string_view to_string(Group group);
TaskKind parse_task_kind(std::string_view text);
Group parse_group(std::string_view text);

/// The mode a group uses in a given session (1 or 2).
Mode mode_for(Group group, int session_number);

namespace event {
struct Pose {
  CameraPose pose;
};
struct PointSubmit {
  double x = 0.0;
  double z = 0.0;
};
struct ObstacleReport {
  double x = 0.0;
  double z = 0.0;
};
struct ModeSet {
  Mode mode = Mode::TwoD;
};
struct TaskStart {};
struct TaskEnd {};
struct Collision {
  int obstacle = 0;
};
}  // namespace event

using EventPayload = std::variant<event::Pose, event::PointSubmit, event::ObstacleReport, event::ModeSet,
                                  event::TaskStart, event::TaskEnd, event::Collision>;

struct SessionEvent {
  double t = 0.0;
  EventPayload payload;
};

std::string_view kind_name(const EventPayload& payload);

struct SessionHeader {
  std::string participant_id;
  Group group = Group::G2D3D;
  int session_number = 1;
  Mode mode = Mode::TwoD;
  TaskKind task = TaskKind::Localization;
  std::uint64_t seed = 0;
  int course = 0;  // 1..3 for navigation courses, 0 for localization
  std::string agent;
  std::string session_id;
  bool complete = false;
  std::string free_text;
};

struct SessionLog {
  SessionHeader header;
  std::vector<SessionEvent> events;

  /// Appends an event; throws std::invalid_argument if t precedes the last event.
  void append(double t, EventPayload payload);
  std::optional<double> start_time() const;
  std::optional<double> end_time() const;
  /// Exactly one task_start and one task_end, in that order.
  bool has_complete_events() const;
};

inline constexpr std::string_view kLogSchema = "echogrid-log/1";

std::string to_jsonl(const SessionLog& log);
/// Throws DataError naming the offending line.
SessionLog session_log_from_jsonl(std::string_view text);

SessionLog read_session_log(const std::filesystem::path& path);
/// Temp file + rename, so readers never see a partial log.
void write_session_log_atomic(const SessionLog& log, const std::filesystem::path& path);

}  // namespace echogrid
