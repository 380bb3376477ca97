#pragma once

// Offline audio replay of a recorded session.

#include "echogrid/audio.hpp"
#include "echogrid/session_log.hpp"
#include "echogrid/wav.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace echogrid {

struct ReplayConfig {
  /// Engine settings; when unset, the detection profile follows the log's task.
  std::optional<SonificationEngine::Config> engine;
  MixerConfig mixer;
};

/// Steps the engine at every distinct event time and renders the mixer in
/// chunks split at those times. The output spans the first to the last event.
/// Throws DataError for a log without events or without any pose.
wav::Audio render_offline_audio(const SessionLog& log, const Scene& scene, const HrirSet& hrirs,
                                const ReplayConfig& config = {});

/// render_offline_audio encoded as a PCM16 stereo WAV file image.
std::vector<std::uint8_t> render_offline(const SessionLog& log, const Scene& scene, const HrirSet& hrirs,
                                         const ReplayConfig& config = {});

}  // namespace echogrid
