#include "echogrid/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace echogrid {

std::string_view to_string(Mode mode) { return mode == Mode::TwoD ? "2d" : "3d"; }

Mode parse_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "2d") return Mode::TwoD;
  if (lower == "3d") return Mode::ThreeD;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected 2d or 3d)");
}

std::string_view to_string(NoteName name) {
  switch (name) {
    case NoteName::C3: return "C3";
    case NoteName::E3: return "E3";
    case NoteName::G3: return "G3";
  }
  return "?";
}

void validate(const CellGrid& grid) {
  for (double az : grid.azimuths_deg)
    if (!(az >= -90.0 && az <= 90.0)) throw std::invalid_argument("column azimuths must lie in [-90, 90]");
}

double equal_temperament_hz(int midi_note) { return 440.0 * std::pow(2.0, (midi_note - 69) / 12.0); }

CellId map_to_cell(const Vec2& p, const CellGrid&) {
  if (!(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0))
    throw std::invalid_argument("image point must lie in [0, 1]^2");
  const int row = std::min(static_cast<int>(std::floor(p.y() * CellGrid::kRows)), CellGrid::kRows - 1);
  const int col = std::min(static_cast<int>(std::floor(p.x() * CellGrid::kCols)), CellGrid::kCols - 1);
  return {row, col};
}

double loop_period(Mode mode, double distance, const DetectionProfile& profile) {
  if (!(distance > 0.0)) throw std::invalid_argument("distance must be positive");
  if (mode == Mode::TwoD) return kTwoDLoopSeconds;
  return std::clamp(distance, profile.min_range, profile.max_range);
}

NoteSpec note_for_row(int row) {
  switch (row) {
    case 0: return {NoteName::G3, equal_temperament_hz(55), 0.0};
    case 1: return {NoteName::E3, equal_temperament_hz(52), 0.0};
    case 2: return {NoteName::C3, equal_temperament_hz(48), 0.0};
    default: throw std::invalid_argument("row must lie in 0..2");
  }
}

double azimuth_for_col(int col, const CellGrid& grid) {
  if (col < 0 || col >= CellGrid::kCols) throw std::invalid_argument("column must lie in 0..4");
  return grid.azimuths_deg[static_cast<std::size_t>(col)];
}

NoteSpec note_for_cell(CellId cell, const CellGrid& grid) {
  NoteSpec spec = note_for_row(cell.row);
  spec.azimuth_deg = azimuth_for_col(cell.col, grid);
  return spec;
}

ActiveCellSet update_activations(const ActiveCellSet& prev, std::span<const Detection> detections,
                                 const CellGrid& grid, Mode mode, double now, const DetectionProfile& profile) {
  if (now < prev.timestamp) throw std::invalid_argument("time must not run backwards");
  const double dt = now - prev.timestamp;

  std::map<std::pair<CellId, int>, const CellActivation*> previous;
  for (const CellActivation& a : prev.activations) previous.emplace(std::pair{a.cell, a.marker_id}, &a);

  ActiveCellSet next;
  next.mode = mode;
  next.timestamp = now;
  std::map<std::pair<CellId, int>, CellActivation> current;
  for (const Detection& d : detections) {
    const CellId cell = map_to_cell(d.image_point, grid);
    const auto key = std::pair{cell, d.marker_id};
    if (current.contains(key)) continue;
    const double latest = loop_period(mode, d.distance, profile);

    CellActivation a;
    if (const auto it = previous.find(key); it != previous.end()) {
      a = *it->second;
      a.loop_phase += dt;
      while (a.loop_phase >= a.period) {
        a.loop_phase -= a.period;
        a.period = latest;
        ++a.loops_completed;
      }
    } else {
      a.cell = cell;
      a.marker_id = d.marker_id;
      a.first_seen = now;
      a.loop_phase = 0.0;
      a.period = latest;
    }
    a.distance = d.distance;
    a.next_period = latest;
    current.emplace(key, a);
  }
  next.activations.reserve(current.size());
  for (auto& [key, a] : current) next.activations.push_back(a);
  return next;
}

SonificationEngine::SonificationEngine(Scene scene, Config config, Mode mode)
    : scene_(std::move(scene)), config_(config), mode_(mode) {
  validate(config_.intrinsics);
  validate(config_.profile);
  validate(config_.grid);
  state_.mode = mode;
}

const ActiveCellSet& SonificationEngine::step(const std::optional<CameraPose>& pose, double now) {
  std::vector<Detection> detections;
  if (pose) detections = detect_markers(scene_, *pose, config_.intrinsics, config_.profile, config_.detect);
  state_ = update_activations(state_, detections, config_.grid, mode_, now, config_.profile);
  return state_;
}

}  // namespace echogrid
