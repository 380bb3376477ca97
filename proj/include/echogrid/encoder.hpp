#pragma once

// Image-grid sonification state: which cells sound, with which note, at
// which azimuth, and how often they repeat.

#include "echogrid/geometry.hpp"
#include "echogrid/scene.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace echogrid {

enum class Mode { TwoD, ThreeD };

std::string_view to_string(Mode mode);
/// Accepts "2d"/"3d" (any case). Throws std::invalid_argument otherwise.
Mode parse_mode(std::string_view text);

struct CellId {
  int row = 0;  // 0 = top
  int col = 0;  // 0 = left

  auto operator<=>(const CellId&) const = default;
};

/// 3 x 5 uniform partition of the normalized image. Column azimuths are
/// configurable; the default spreads them symmetrically at 20 degree pitch.
struct CellGrid {
  static constexpr int kRows = 3;
  static constexpr int kCols = 5;
  std::array<double, kCols> azimuths_deg{-40.0, -20.0, 0.0, 20.0, 40.0};
};

void validate(const CellGrid& grid);

enum class NoteName { C3, E3, G3 };

std::string_view to_string(NoteName name);

struct NoteSpec {
  NoteName name = NoteName::E3;
  double frequency_hz = 0.0;
  double azimuth_deg = 0.0;
};

/// 440 * 2^((midi - 69) / 12).
double equal_temperament_hz(int midi_note);

/// Half-open cells; u = 1 or v = 1 clamps into the last column/row.
CellId map_to_cell(const Vec2& image_point, const CellGrid& grid = {});

/// Seconds between note onsets. TwoD: always 2 s. ThreeD: the distance in
/// meters, clamped to the detection range, read as seconds.
double loop_period(Mode mode, double distance, const DetectionProfile& profile);

/// Top row G3, middle E3, bottom C3. The azimuth field is left at 0.
NoteSpec note_for_row(int row);

double azimuth_for_col(int col, const CellGrid& grid = {});

/// Row note combined with column azimuth.
NoteSpec note_for_cell(CellId cell, const CellGrid& grid = {});

inline constexpr double kTwoDLoopSeconds = 2.0;

struct CellActivation {
  CellId cell;
  int marker_id = 0;
  double distance = 0.0;     // latest measured distance, meters
  double first_seen = 0.0;   // seconds
  double loop_phase = 0.0;   // seconds into the current loop, in [0, period)
  double period = 0.0;       // length of the current loop
  double next_period = 0.0;  // length the next loop will get, from the latest distance
  std::uint64_t loops_completed = 0;
};

struct ActiveCellSet {
  std::vector<CellActivation> activations;  // sorted by (cell, marker_id)
  Mode mode = Mode::TwoD;
  double timestamp = 0.0;
};

/// One tick of the loop-until-undetected state machine.
///
/// New detections start at phase 0; activations whose marker vanished (or
/// moved to another cell) are dropped; survivors advance by the elapsed time
/// and pick up a new period, computed from the latest distance, only when
/// they cross a loop boundary. Throws std::invalid_argument if now is earlier
/// than prev.timestamp.
ActiveCellSet update_activations(const ActiveCellSet& prev, std::span<const Detection> detections,
                                 const CellGrid& grid, Mode mode, double now, const DetectionProfile& profile);

/// Scene + camera + detector + encoder wired together; owns the single
/// authoritative ActiveCellSet.
class SonificationEngine {
public:
  struct Config {
    CameraIntrinsics intrinsics;
    DetectionProfile profile;
    CellGrid grid;
    DetectOptions detect;
  };

  SonificationEngine(Scene scene, Config config, Mode mode);

  /// Detects from pose and advances the cell set to time now.
  const ActiveCellSet& step(const std::optional<CameraPose>& pose, double now);

  const ActiveCellSet& state() const { return state_; }
  const Scene& scene() const { return scene_; }
  const Config& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

private:
  Scene scene_;
  Config config_;
  Mode mode_;
  ActiveCellSet state_;
};

}  // namespace echogrid
