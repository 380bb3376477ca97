#include "echogrid/audio.hpp"

#include "echogrid/error.hpp"
#include "echogrid/wav.hpp"
#include "json_fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#ifndef ECHOGRID_DATA_DIR
#define ECHOGRID_DATA_DIR "data"
#endif

namespace echogrid {

namespace {

constexpr std::array<double, 6> kHarmonicAmplitudes{1.0, 0.5, 0.33, 0.25, 0.2, 0.17};
constexpr double kAttackSeconds = 0.005;
constexpr double kNotePeak = 0.9;
constexpr double kHeadRadius = 0.0875;
constexpr double kSpeedOfSound = 343.0;
constexpr double kMaxIldDb = 6.0;

}  // namespace

NoteSample synth_note(double frequency_hz, double nominal_length, int sample_rate) {
  if (!(frequency_hz > 0)) throw std::invalid_argument("note frequency must be positive");
  if (!(nominal_length > 0) || sample_rate <= 0) throw std::invalid_argument("invalid note length or rate");
  const auto n = static_cast<std::size_t>(std::llround(nominal_length * sample_rate));
  const double decay = std::log(1000.0) / nominal_length;
  std::vector<double> x(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double attack = t < kAttackSeconds ? 0.5 * (1.0 - std::cos(std::numbers::pi * t / kAttackSeconds)) : 1.0;
    double s = 0.0;
    for (std::size_t h = 0; h < kHarmonicAmplitudes.size(); ++h)
      s += kHarmonicAmplitudes[h] * std::sin(2.0 * std::numbers::pi * static_cast<double>(h + 1) * frequency_hz * t);
    x[i] = s * attack * std::exp(-decay * t);
    peak = std::max(peak, std::abs(x[i]));
  }
  NoteSample note;
  note.sample_rate = sample_rate;
  note.nominal_length = nominal_length;
  note.samples.resize(n);
  const double scale = peak > 0 ? kNotePeak / peak : 0.0;
  for (std::size_t i = 0; i < n; ++i) note.samples[i] = static_cast<float>(x[i] * scale);
  return note;
}

NoteSample note_from_audio(std::vector<float> mono, int sample_rate, double nominal_length) {
  for (float s : mono)
    if (!std::isfinite(s) || std::abs(s) > 1.0f) throw DataError("note samples must be finite with peak <= 1");
  if (sample_rate <= 0 || !(nominal_length > 0)) throw DataError("invalid note rate or length");
  return {std::move(mono), sample_rate, nominal_length};
}

const HrirEntry& HrirSet::nearest(double azimuth_deg) const {
  if (entries.empty()) throw std::logic_error("empty HRIR set");
  const HrirEntry* best = &entries.front();
  double best_d = std::abs(best->azimuth_deg - azimuth_deg);
  for (const HrirEntry& e : entries) {
    const double d = std::abs(e.azimuth_deg - azimuth_deg);
    if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && std::abs(e.azimuth_deg) < std::abs(best->azimuth_deg))) {
      best = &e;
      best_d = d;
    }
  }
  return *best;
}

void validate(const HrirSet& set) {
  if (set.sample_rate <= 0) throw DataError("HRIR sample rate must be positive");
  if (set.entries.size() < 2) throw DataError("HRIR set needs at least two azimuths");
  const std::size_t len = set.entries.front().left.size();
  if (len == 0) throw DataError("HRIR impulse responses must not be empty");
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    const HrirEntry& e = set.entries[i];
    if (i > 0 && !(e.azimuth_deg > set.entries[i - 1].azimuth_deg))
      throw DataError("HRIR azimuths must be strictly increasing");
    if (e.left.size() != len || e.right.size() != len) throw DataError("HRIR impulse responses differ in length");
    for (float s : e.left)
      if (!std::isfinite(s)) throw DataError("HRIR samples must be finite");
    for (float s : e.right)
      if (!std::isfinite(s)) throw DataError("HRIR samples must be finite");
  }
}

int woodworth_delay_samples(double azimuth_deg, int sample_rate) {
  const double theta = deg_to_rad(std::abs(azimuth_deg));
  return static_cast<int>(std::lround(kHeadRadius / kSpeedOfSound * (theta + std::sin(theta)) * sample_rate));
}

HrirSet parametric_hrir(std::span<const double> azimuths_deg, int sample_rate) {
  for (std::size_t i = 0; i < azimuths_deg.size(); ++i) {
    if (!(azimuths_deg[i] >= -90.0 && azimuths_deg[i] <= 90.0))
      throw std::invalid_argument("azimuths must lie in [-90, 90]");
    if (i > 0 && !(azimuths_deg[i] > azimuths_deg[i - 1])) throw std::invalid_argument("azimuths must be sorted");
  }
  int max_delay = 0;
  for (double az : azimuths_deg) max_delay = std::max(max_delay, woodworth_delay_samples(az, sample_rate));
  const auto len = static_cast<std::size_t>(max_delay + 1);

  HrirSet set;
  set.sample_rate = sample_rate;
  for (double az : azimuths_deg) {
    HrirEntry e{az, std::vector<float>(len, 0.0f), std::vector<float>(len, 0.0f)};
    const auto delay = static_cast<std::size_t>(woodworth_delay_samples(az, sample_rate));
    const auto far_gain = static_cast<float>(std::pow(10.0, -kMaxIldDb * std::abs(std::sin(deg_to_rad(az))) / 20.0));
    if (az > 0) {
      e.right[0] = 1.0f;
      e.left[delay] = far_gain;
    } else if (az < 0) {
      e.left[0] = 1.0f;
      e.right[delay] = far_gain;
    } else {
      e.left[0] = e.right[0] = 1.0f;
    }
    set.entries.push_back(std::move(e));
  }
  return set;
}

namespace {

std::string azimuth_stem(double az) { return std::to_string(static_cast<long>(std::lround(az))); }

}  // namespace

HrirSet load_hrir(const std::filesystem::path& dir_in) {
  std::filesystem::path dir = dir_in;
  if (!std::filesystem::exists(dir / "index.json") && std::filesystem::exists(dir / "hrir" / "index.json"))
    dir = dir / "hrir";
  std::ifstream in(dir / "index.json");
  if (!in) throw DataError("HRIR index not found in " + dir.string());
  std::stringstream text;
  text << in.rdbuf();
  const auto index = detail::parse_document(text.str());
  const std::string schema = detail::string_field(index, "schema", "");
  if (schema != kHrirSchema) detail::field_error("schema", "unsupported HRIR schema '" + schema + "'");
  const auto& rate = detail::require(index, "sample_rate", "");
  if (!rate.is_number_integer() || rate.get<int>() <= 0) detail::field_error("sample_rate", "expected a positive integer");
  const auto& azimuths = detail::require(index, "azimuths", "");
  if (!azimuths.is_array()) detail::field_error("azimuths", "expected an array");

  HrirSet set;
  set.sample_rate = rate.get<int>();
  for (std::size_t i = 0; i < azimuths.size(); ++i) {
    if (!azimuths[i].is_number_integer())
      detail::field_error("azimuths[" + std::to_string(i) + "]", "expected integer degrees");
    const double az = azimuths[i].get<int>();
    if (!set.entries.empty() && !(az > set.entries.back().azimuth_deg))
      throw DataError("HRIR azimuths must be strictly increasing without duplicates");
    HrirEntry e{az, {}, {}};
    for (const char* side : {"L", "R"}) {
      const auto path = dir / (azimuth_stem(az) + "_" + side + ".wav");
      if (!std::filesystem::exists(path)) throw DataError("missing HRIR channel " + path.string());
      wav::Audio audio = wav::read_file(path);
      if (audio.channels != 1) throw DataError(path.string() + ": HRIR files must be mono");
      if (audio.sample_rate != set.sample_rate) throw DataError(path.string() + ": sample rate differs from index");
      (side[0] == 'L' ? e.left : e.right) = std::move(audio.samples);
    }
    set.entries.push_back(std::move(e));
  }
  validate(set);
  return set;
}

void save_hrir(const HrirSet& set, const std::filesystem::path& dir) {
  validate(set);
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["schema"] = kHrirSchema;
  index["sample_rate"] = set.sample_rate;
  index["azimuths"] = nlohmann::json::array();
  for (const HrirEntry& e : set.entries) {
    index["azimuths"].push_back(std::lround(e.azimuth_deg));
    wav::write_file(dir / (azimuth_stem(e.azimuth_deg) + "_L.wav"), {1, set.sample_rate, e.left}, wav::Encoding::Float32);
    wav::write_file(dir / (azimuth_stem(e.azimuth_deg) + "_R.wav"), {1, set.sample_rate, e.right}, wav::Encoding::Float32);
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  out << index.dump(2) << "\n";
  if (!out) throw StorageError("cannot write " + (dir / "index.json").string());
}

std::vector<float> spatialize(const NoteSample& note, double azimuth_deg, const HrirSet& hrirs) {
  if (note.sample_rate != hrirs.sample_rate) throw std::invalid_argument("note and HRIR sample rates differ");
  const HrirEntry& e = hrirs.nearest(azimuth_deg);
  const std::size_t n = note.samples.size();
  const std::size_t m = e.left.size();
  if (n == 0) return {};
  std::vector<float> out(2 * (n + m - 1), 0.0f);
  for (std::size_t k = 0; k < m; ++k) {
    const float gl = e.left[k];
    const float gr = e.right[k];
    if (gl == 0.0f && gr == 0.0f) continue;
    for (std::size_t i = 0; i < n; ++i) {
      out[2 * (i + k)] += gl * note.samples[i];
      out[2 * (i + k) + 1] += gr * note.samples[i];
    }
  }
  return out;
}

float soft_clip(float x) {
  constexpr float knee = 0.95f;
  const float a = std::abs(x);
  if (a <= knee) return x;
  const float y = knee + (1.0f - knee) * std::tanh((a - knee) / (1.0f - knee));
  return std::copysign(std::min(y, 0.99999f), x);
}

// ---------------------------------------------------------------------------
// Mixer

namespace {

std::array<NoteSample, 3> synth_row_notes(int sample_rate) {
  std::array<NoteSample, 3> notes;
  for (int row = 0; row < CellGrid::kRows; ++row)
    notes[static_cast<std::size_t>(row)] = synth_note(note_for_row(row).frequency_hz, kTwoDLoopSeconds, sample_rate);
  return notes;
}

}  // namespace

Mixer::Mixer(const HrirSet& hrirs, const CellGrid& grid, MixerConfig config)
    : Mixer(hrirs, grid, synth_row_notes(config.sample_rate), config) {}

Mixer::Mixer(const HrirSet& hrirs, const CellGrid& grid, std::array<NoteSample, 3> row_notes, MixerConfig config)
    : config_(config), notes_(std::move(row_notes)) {
  validate(hrirs);
  validate(grid);
  if (hrirs.sample_rate != config_.sample_rate) throw std::invalid_argument("HRIR and mixer sample rates differ");
  for (const NoteSample& n : notes_)
    if (n.sample_rate != config_.sample_rate || n.samples.empty())
      throw std::invalid_argument("note samples must be non-empty at the mixer sample rate");
  ir_length_ = hrirs.ir_length();
  for (int col = 0; col < CellGrid::kCols; ++col) {
    const HrirEntry& e = hrirs.nearest(azimuth_for_col(col, grid));
    SparseIr& ir = column_irs_[static_cast<std::size_t>(col)];
    for (std::size_t k = 0; k < ir_length_; ++k) {
      if (e.left[k] != 0.0f) ir.left.push_back({static_cast<int>(k), e.left[k]});
      if (e.right[k] != 0.0f) ir.right.push_back({static_cast<int>(k), e.right[k]});
    }
  }
  fade_frames_ = std::max<std::int64_t>(1, std::llround(config_.fade_seconds * config_.sample_rate));
  voices_.resize(config_.max_voices);
  for (Voice& v : voices_) v.history.assign(ir_length_, 0.0f);
}

const Mixer::SparseIr& Mixer::ir_for(CellId cell) const { return column_irs_[static_cast<std::size_t>(cell.col)]; }

std::size_t Mixer::active_voices() const {
  return static_cast<std::size_t>(std::count_if(voices_.begin(), voices_.end(), [](const Voice& v) { return v.in_use; }));
}

void Mixer::apply(const ActiveCellSet& snapshot) {
  // Voices matched by this snapshot stay; unmatched live voices begin release.
  for (Voice& v : voices_) v.touched = false;

  for (const CellActivation& a : snapshot.activations) {
    std::size_t found = voices_.size();
    for (std::size_t i = 0; i < voices_.size(); ++i) {
      const Voice& v = voices_[i];
      if (v.in_use && !v.releasing && v.cell == a.cell && v.marker_id == a.marker_id && v.first_seen == a.first_seen) {
        found = i;
        break;
      }
    }
    if (found == voices_.size()) {
      for (std::size_t i = 0; i < voices_.size(); ++i) {
        if (voices_[i].in_use) continue;
        Voice& v = voices_[i];
        v.in_use = true;
        v.cell = a.cell;
        v.marker_id = a.marker_id;
        v.first_seen = a.first_seen;
        v.row = a.cell.row;
        v.ir = &ir_for(a.cell);
        v.next_onset = static_cast<double>(frame_);
        v.pending_period = a.period;
        v.started = false;
        v.sounding = false;
        v.releasing = false;
        v.release_left = 0;
        v.tail_left = 0;
        std::fill(v.history.begin(), v.history.end(), 0.0f);
        v.history_pos = 0;
        found = i;
        break;
      }
      if (found == voices_.size()) continue;  // pool exhausted
    }
    voices_[found].latest_next_period = a.next_period;
    voices_[found].touched = true;
  }
  for (Voice& v : voices_) {
    if (!v.in_use || v.releasing || v.touched) continue;
    v.releasing = true;
    v.release_left = v.sounding ? fade_frames_ : 0;
    if (!v.sounding) v.tail_left = static_cast<std::int64_t>(ir_length_);
  }
}

void Mixer::render(const ActiveCellSet& snapshot, std::span<float> out) {
  apply(snapshot);
  const std::size_t frames = out.size() / 2;
  const double sr = config_.sample_rate;
  const auto n_hist = ir_length_;
  for (std::size_t f = 0; f < frames; ++f) {
    double acc_l = 0.0;
    double acc_r = 0.0;
    for (Voice& v : voices_) {
      if (!v.in_use) continue;
      if (!v.releasing && static_cast<double>(frame_) >= std::round(v.next_onset)) {
        const NoteSample& note = notes_[static_cast<std::size_t>(v.row)];
        const double loop = v.started ? v.latest_next_period : v.pending_period;
        v.started = true;
        const auto note_frames = static_cast<std::int64_t>(note.samples.size());
        const bool truncated = loop < note.nominal_length;
        v.note_len = std::min<std::int64_t>(note_frames, std::llround(std::min(loop, note.nominal_length) * sr));
        v.fade_start = truncated ? std::max<std::int64_t>(0, v.note_len - fade_frames_) : v.note_len;
        v.note_pos = 0;
        v.sounding = v.note_len > 0;
        v.next_onset += loop * sr;
      }
      float dry = 0.0f;
      if (v.sounding) {
        const NoteSample& note = notes_[static_cast<std::size_t>(v.row)];
        double gain = 1.0;
        if (v.note_pos >= v.fade_start)
          gain = static_cast<double>(v.note_len - v.note_pos) / static_cast<double>(fade_frames_);
        if (v.releasing) {
          gain *= static_cast<double>(v.release_left) / static_cast<double>(fade_frames_);
          if (--v.release_left <= 0) v.sounding = false;
        }
        dry = static_cast<float>(note.samples[static_cast<std::size_t>(v.note_pos)] * gain);
        if (++v.note_pos >= v.note_len) v.sounding = false;
        if (!v.sounding && v.releasing) v.tail_left = static_cast<std::int64_t>(n_hist);
      }
      v.history[v.history_pos] = dry;
      for (const Tap& t : v.ir->left)
        acc_l += t.gain * v.history[(v.history_pos + n_hist - static_cast<std::size_t>(t.delay)) % n_hist];
      for (const Tap& t : v.ir->right)
        acc_r += t.gain * v.history[(v.history_pos + n_hist - static_cast<std::size_t>(t.delay)) % n_hist];
      v.history_pos = (v.history_pos + 1) % n_hist;
      if (v.releasing && !v.sounding && --v.tail_left <= 0) v.in_use = false;
    }
    out[2 * f] = soft_clip(static_cast<float>(config_.master_gain * acc_l));
    out[2 * f + 1] = soft_clip(static_cast<float>(config_.master_gain * acc_r));
    ++frame_;
  }
}

AudioBlock render_block(const ActiveCellSet& snapshot, Mixer& state, std::size_t n_frames, int sample_rate) {
  if (n_frames == 0) throw std::invalid_argument("block must contain at least one frame");
  if (sample_rate != state.sample_rate()) throw std::invalid_argument("block sample rate differs from mixer");
  AudioBlock block;
  block.sample_rate = sample_rate;
  block.start_time = static_cast<double>(state.frame()) / sample_rate;
  block.frames.resize(2 * n_frames);
  state.render(snapshot, block.frames);
  return block;
}

HrirSet default_hrir_set() {
  if (const char* env = std::getenv("ECHOGRID_HRIR_DIR"); env && *env) return load_hrir(env);
  try {
    return load_hrir(std::filesystem::path(ECHOGRID_DATA_DIR) / "hrir");
  } catch (const DataError&) {
    const std::array<double, 7> az{-60, -40, -20, 0, 20, 40, 60};
    return parametric_hrir(az);
  }
}

}  // namespace echogrid
