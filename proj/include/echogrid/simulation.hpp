#pragma once

// Closed-loop headless runs: a scripted agent moves the virtual camera, hears
// the engine's cell set each tick, and acts on the task.

#include "echogrid/encoder.hpp"
#include "echogrid/session_log.hpp"
#include "echogrid/tasks.hpp"

#include <cstdint>
#include <string_view>

namespace echogrid {

enum class AgentKind {
  Sweep,         // localization: raster scan of the table, then center and point
  UpDownRanger,  // navigation: pitch sweeps, distance from the depression angle
  Oracle,        // either task: reads the scene directly
};

std::string_view to_string(AgentKind kind);
/// Accepts "sweep", "updown"/"up-down"/"updownranger", "oracle".
AgentKind parse_agent_kind(std::string_view text);

/// Detection profile matching the task's marker size.
SonificationEngine::Config engine_config_for(TaskKind task);

struct SimConfig {
  double tick_hz = 30.0;
  double max_seconds = 0.0;  // 0 picks the task default (300 s table, 900 s corridor)
  double pointing_sigma_deg = 3.0;
  double hand_speed = 0.5;     // m/s, table task
  double walk_speed = 1.0;     // m/s, corridor task
  double turn_rate_deg = 90.0; // deg/s, yaw and pitch
  double device_height = 1.2;  // camera height while walking
  double collision_margin = 0.15;
  CameraIntrinsics intrinsics;
  CellGrid grid;
  DetectOptions detect;
};

/// Runs one session. The header carries task, mode, seed and agent; callers
/// fill in participant and group fields. A run that exceeds its tick budget
/// returns the partial log with header.complete == false and no task_end.
/// Throws std::invalid_argument when the agent cannot do the task.
SessionLog run_scripted(AgentKind agent, const LocalizationTask& task, Mode mode, std::uint64_t seed,
                        const SimConfig& config = {});
SessionLog run_scripted(AgentKind agent, const NavigationTask& task, Mode mode, std::uint64_t seed,
                        const SimConfig& config = {});

}  // namespace echogrid
