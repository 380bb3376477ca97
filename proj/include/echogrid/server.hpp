#pragma once

// Live session protocol. The state machine here does no I/O: the transport
// feeds it client messages and clock ticks, sends whatever it returns, and
// persists the finished logs it hands back.

#include "echogrid/encoder.hpp"
#include "echogrid/session_log.hpp"
#include "echogrid/tasks.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace echogrid::server {

using nlohmann::json;

inline constexpr std::string_view kProtocol = "echogrid/1";

namespace code {
inline constexpr std::string_view kVersion = "E_VERSION";
inline constexpr std::string_view kHandshake = "E_HANDSHAKE";
inline constexpr std::string_view kPhase = "E_PHASE";
inline constexpr std::string_view kPayload = "E_PAYLOAD";
inline constexpr std::string_view kTime = "E_TIME";
inline constexpr std::string_view kMode = "E_MODE";
}  // namespace code

/// One session: the localization task, then three navigation courses.
enum class Phase { AwaitHello, Idle, LocRunning, LocDone, NavReady, NavRunning, NavDone, Finished };

std::string_view to_string(Phase phase);

/// Rank of a (phase, course) pair along the session. Valid transitions never
/// decrease it.
int progress_rank(Phase phase, int course);

struct ServerConfig {
  Group group = Group::G2D3D;
  int session_number = 1;
  std::uint64_t seed = 0;
  CameraIntrinsics intrinsics;
  CellGrid grid;
  double max_message_rate = 60.0;  // active_cells per second
  double collision_margin = 0.15;
};

struct SessionState {
  ServerConfig config;
  std::string session_id;
  Phase phase = Phase::AwaitHello;
  int course = 0;  // 1..3 during navigation
  std::string participant_id;
  Group group = Group::G2D3D;
  int session_number = 1;
  std::uint64_t seed = 0;
  Mode mode = Mode::TwoD;
  bool pcm = false;

  std::optional<LocalizationTask> localization;
  std::optional<NavigationTask> navigation;
  std::optional<SonificationEngine> engine;
  std::optional<CameraPose> pose;
  SessionLog log;  // the task currently loaded
  std::optional<double> last_client_t;
  int submissions = 0;
  std::vector<bool> inside_obstacle;

  // active_cells emission bookkeeping
  bool emitted = false;
  bool pending = false;
  double last_emit = 0.0;
  json last_cells;

  SessionState(ServerConfig config, std::string session_id);

  /// Fingerprint of everything a client message can change (used to check
  /// that rejected messages leave the session untouched).
  std::string digest() const;
};

struct Output {
  std::vector<json> messages;
  std::vector<SessionLog> finished_logs;  // to persist
  bool close = false;
};

/// Applies one client message. Rejected messages produce a single `error`
/// message and leave the state unchanged. Event times come from the message's
/// `t` when present, else from `now`.
Output handle_message(SessionState& state, const json& message, double now);

/// Parses a text frame first; syntax errors become E_PAYLOAD.
Output handle_text(SessionState& state, std::string_view text, double now);

/// Advances the engine to `now`. Returns an `active_cells` message when the
/// sounding set changed or a loop boundary passed, at most max_message_rate
/// per second.
std::optional<json> tick(SessionState& state, double now);

/// Connection lost: a running task's log is returned flagged incomplete.
Output abort_session(SessionState& state);

/// `active_cells` payload for a snapshot.
json active_cells_message(const ActiveCellSet& set, const CellGrid& grid);

/// Writes `<dir>/<session>-<task>[-c<course>].jsonl` atomically and returns the path.
std::filesystem::path persist(const SessionLog& log, const std::filesystem::path& dir);

}  // namespace echogrid::server
