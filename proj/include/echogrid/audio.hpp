#pragma once

// Note synthesis, binaural spatialization and the block mixer that turns
// ActiveCellSet snapshots into stereo audio.

#include "echogrid/encoder.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace echogrid {

inline constexpr int kSampleRate = 44100;

struct NoteSample {
  std::vector<float> samples;  // mono
  int sample_rate = kSampleRate;
  double nominal_length = 2.0;  // seconds
};

/// Additive piano surrogate: fundamental plus harmonics 2..6 at relative
/// amplitudes 1, .5, .33, .25, .2, .17, a 5 ms raised-cosine attack and an
/// exponential decay reaching -60 dB at nominal_length. Peak-normalized to 0.9.
NoteSample synth_note(double frequency_hz, double nominal_length, int sample_rate = kSampleRate);

/// Wraps a user-supplied mono recording; rejects non-finite samples or peaks above 1.
NoteSample note_from_audio(std::vector<float> mono, int sample_rate, double nominal_length);

struct HrirEntry {
  double azimuth_deg = 0.0;
  std::vector<float> left;
  std::vector<float> right;
};

struct HrirSet {
  int sample_rate = kSampleRate;
  std::vector<HrirEntry> entries;  // strictly increasing azimuth

  std::size_t ir_length() const { return entries.empty() ? 0 : entries.front().left.size(); }
  /// Nearest azimuth; ties go to the entry closer to 0 degrees.
  const HrirEntry& nearest(double azimuth_deg) const;
};

/// Throws DataError when the set breaks its invariants.
void validate(const HrirSet& set);

/// Spherical-head fallback: Woodworth ITD (a = 8.75 cm, c = 343 m/s) as an
/// integer-sample delay on the far ear, plus a 6 dB * |sin(azimuth)| level drop
/// on the far ear. Every IR has the same length (longest delay + 1).
HrirSet parametric_hrir(std::span<const double> azimuths_deg, int sample_rate = kSampleRate);

/// Woodworth interaural delay in samples, rounded.
int woodworth_delay_samples(double azimuth_deg, int sample_rate);

inline constexpr std::string_view kHrirSchema = "echogrid-hrir/1";

/// Reads `<dir>/index.json` and `<dir>/<azimuth>_L.wav`, `<dir>/<azimuth>_R.wav`.
/// A directory that holds an `hrir/` subdirectory is also accepted.
HrirSet load_hrir(const std::filesystem::path& dir);
void save_hrir(const HrirSet& set, const std::filesystem::path& dir);

/// Full convolution of the note with the nearest entry. Returns interleaved
/// stereo of length note + IR - 1 frames.
std::vector<float> spatialize(const NoteSample& note, double azimuth_deg, const HrirSet& hrirs);

/// Linear below 0.95, tanh knee above; output magnitude stays below 1.
float soft_clip(float x);

struct AudioBlock {
  std::vector<float> frames;  // interleaved stereo
  int sample_rate = kSampleRate;
  double start_time = 0.0;

  std::size_t frame_count() const { return frames.size() / 2; }
};

struct MixerConfig {
  int sample_rate = kSampleRate;
  float master_gain = 0.5f;
  double fade_seconds = 0.010;
  std::size_t max_voices = 64;
};

/// Per-voice render cursors and convolution tails. A voice is keyed by
/// (cell, marker, first_seen); each loop boundary restarts the row's note,
/// truncated to the loop period with a short fade when the period is shorter
/// than the note. Voices that leave the snapshot fade out and drain their
/// convolution tail before being recycled.
///
/// render() never allocates; it is meant to run in the audio callback.
class Mixer {
public:
  Mixer(const HrirSet& hrirs, const CellGrid& grid, std::array<NoteSample, 3> row_notes, MixerConfig config = {});
  Mixer(const HrirSet& hrirs, const CellGrid& grid, MixerConfig config = {});

  /// Applies the snapshot at the first frame and renders out.size() / 2 frames.
  void render(const ActiveCellSet& snapshot, std::span<float> interleaved_out);

  std::uint64_t frame() const { return frame_; }
  int sample_rate() const { return config_.sample_rate; }
  std::size_t active_voices() const;
  const MixerConfig& config() const { return config_; }

private:
  struct Tap {
    int delay;
    float gain;
  };
  struct SparseIr {
    std::vector<Tap> left;
    std::vector<Tap> right;
  };
  struct Voice {
    bool in_use = false;
    bool touched = false;
    CellId cell;
    int marker_id = 0;
    double first_seen = 0.0;
    int row = 0;
    const SparseIr* ir = nullptr;
    double next_onset = 0.0;  // absolute frame, fractional
    double pending_period = 0.0;  // first loop
    double latest_next_period = 0.0;
    bool started = false;
    bool sounding = false;
    std::int64_t note_pos = 0;
    std::int64_t note_len = 0;
    std::int64_t fade_start = 0;
    bool releasing = false;
    std::int64_t release_left = 0;
    std::int64_t tail_left = 0;
    std::vector<float> history;
    std::size_t history_pos = 0;
  };

  void apply(const ActiveCellSet& snapshot);
  const SparseIr& ir_for(CellId cell) const;

  MixerConfig config_;
  std::array<NoteSample, 3> notes_;
  std::array<SparseIr, CellGrid::kCols> column_irs_;
  std::size_t ir_length_ = 1;
  std::int64_t fade_frames_ = 1;
  std::vector<Voice> voices_;
  std::uint64_t frame_ = 0;
};

/// Allocating convenience wrapper over Mixer::render.
AudioBlock render_block(const ActiveCellSet& snapshot, Mixer& state, std::size_t n_frames, int sample_rate);

/// Bundled HRIR directory, or ECHOGRID_HRIR_DIR when set; falls back to the
/// parametric set over -60..60 degrees if neither is readable.
HrirSet default_hrir_set();

/// Wait-free single-producer/single-consumer "latest value" handoff (triple
/// buffer). The consumer always sees the most recently published value.
template <typename T>
class LatestValue {
public:
  LatestValue() = default;
  explicit LatestValue(const T& initial) : slots_{initial, initial, initial} {}

  /// Producer side.
  T& back() { return slots_[back_]; }
  void publish() {
    const unsigned prev = middle_.exchange(back_ | kFresh, std::memory_order_acq_rel);
    back_ = prev & kIndex;
  }
  void publish(const T& value) {
    back() = value;
    publish();
  }

  /// Consumer side: swaps in the freshest value if one arrived.
  const T& latest() {
    if (middle_.load(std::memory_order_relaxed) & kFresh) {
      const unsigned prev = middle_.exchange(front_, std::memory_order_acq_rel);
      front_ = prev & kIndex;
    }
    return slots_[front_];
  }

private:
  static constexpr unsigned kFresh = 4u;
  static constexpr unsigned kIndex = 3u;
  std::array<T, 3> slots_{};
  unsigned back_ = 0;
  unsigned front_ = 1;
  std::atomic<unsigned> middle_{2};
};

}  // namespace echogrid
