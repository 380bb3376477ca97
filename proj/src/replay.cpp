#include "echogrid/replay.hpp"

#include "echogrid/error.hpp"
#include "echogrid/simulation.hpp"

#include <algorithm>
#include <cmath>

namespace echogrid {

wav::Audio render_offline_audio(const SessionLog& log, const Scene& scene, const HrirSet& hrirs,
                                const ReplayConfig& config) {
  if (log.events.empty()) throw DataError("log has no events to replay");
  const bool has_pose = std::any_of(log.events.begin(), log.events.end(),
                                    [](const SessionEvent& e) { return std::holds_alternative<event::Pose>(e.payload); });
  if (!has_pose) throw DataError("log has no pose timeline");

  const SonificationEngine::Config engine_config = config.engine.value_or(engine_config_for(log.header.task));
  SonificationEngine engine(scene, engine_config, log.header.mode);
  Mixer mixer(hrirs, engine_config.grid, config.mixer);

  const double sr = config.mixer.sample_rate;
  const double t0 = log.events.front().t;
  const auto total = static_cast<std::size_t>(std::llround((log.events.back().t - t0) * sr));
  wav::Audio out;
  out.channels = 2;
  out.sample_rate = config.mixer.sample_rate;
  out.samples.assign(total * 2, 0.0f);

  ActiveCellSet snapshot;
  snapshot.mode = log.header.mode;
  std::optional<CameraPose> pose;
  std::size_t cursor = 0;
  auto render_until = [&](std::size_t frame) {
    frame = std::min(frame, total);
    if (frame <= cursor) return;
    mixer.render(snapshot, std::span<float>(out.samples).subspan(cursor * 2, (frame - cursor) * 2));
    cursor = frame;
  };

  for (std::size_t i = 0; i < log.events.size();) {
    const double t = log.events[i].t;
    render_until(static_cast<std::size_t>(std::llround((t - t0) * sr)));
    for (; i < log.events.size() && log.events[i].t == t; ++i) {
      const EventPayload& p = log.events[i].payload;
      if (const auto* pe = std::get_if<event::Pose>(&p)) pose = pe->pose;
      if (const auto* m = std::get_if<event::ModeSet>(&p)) engine.set_mode(m->mode);
    }
    snapshot = engine.step(pose, t);
  }
  render_until(total);
  return out;
}

std::vector<std::uint8_t> render_offline(const SessionLog& log, const Scene& scene, const HrirSet& hrirs,
                                         const ReplayConfig& config) {
  return wav::encode(render_offline_audio(log, scene, hrirs, config), wav::Encoding::Pcm16);
}

}  // namespace echogrid
