// Acceptance checks. One line per criterion: PASS or FAIL, the measured
// values, and the tolerance they were held to. Exit status is the number of
// failures.

#include "echogrid/audio.hpp"
#include "echogrid/batch.hpp"
#include "echogrid/encoder.hpp"
#include "echogrid/replay.hpp"
#include "echogrid/scene.hpp"
#include "echogrid/simulation.hpp"
#include "echogrid/stats.hpp"
#include "echogrid/tasks.hpp"

#include "audio_probe.hpp"
#include "protocol_traffic.hpp"
#include "ss_oracle.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

using namespace echogrid;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kPaperPTolerance = 0.0005;
constexpr double kPearsonPTolerance = 0.002;
constexpr double kPairedTRelTolerance = 1e-9;
constexpr double kSsRelTolerance = 1e-6;
constexpr long kOnsetFrameTolerance = 1;
constexpr double kBlockOfflineRms = 1e-6;
constexpr double kRealTimeFactor = 5.0;
constexpr double kSweepMeanError = 0.1;
constexpr double kUpDownMeanMissed = 1.0;
constexpr double kModeDifferenceAlpha = 0.05;
constexpr double kPointingRatio = 5.0;
constexpr double kPointingRatioTolerance = 0.10;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::ostream& fixed(std::ostream& o, int digits) { return o << std::fixed << std::setprecision(digits); }

const HrirSet& bundled() {
  static const HrirSet set = load_hrir(fs::path(ECHOGRID_DATA_DIR) / "hrir");
  return set;
}

Scene single_marker(const Vec3& center, const Vec3& normal, double size) {
  Scene s;
  s.bounds = {Vec3(-20, -20, -20), Vec3(20, 20, 20)};
  s.markers.push_back({1, center, normal.normalized(), size, "m"});
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

void encoding(Outcome& o) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(1e-6, 12.0);
  std::bernoulli_distribution three_d(0.5);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const DetectionProfile p = i % 2 ? navigation_profile() : localization_profile();
    const double d = dist(rng);
    const Mode m = three_d(rng) ? Mode::ThreeD : Mode::TwoD;
    const double want = m == Mode::TwoD ? 2.0 : std::clamp(d, p.min_range, p.max_range);
    bad += loop_period(m, d, p) != want;
  }
  o.require(bad == 0, "bit-exact periods");
  o.require(loop_period(Mode::ThreeD, 0.3, localization_profile()) == 0.3, "0.3 m -> 0.3 s");
  o.detail << "10000 pairs, " << bad << " mismatches; 0.3 m -> " << loop_period(Mode::ThreeD, 0.3, localization_profile())
           << " s";
}

void grid_table(Outcome& o) {
  const char* names[3] = {"G3", "E3", "C3"};
  const double az[5] = {-40, -20, 0, 20, 40};
  int ok = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) {
      const CellId id = map_to_cell(Vec2((c + 0.5) / 5.0, (r + 0.5) / 3.0));
      const NoteSpec n = note_for_cell(id);
      ok += id.row == r && id.col == c && to_string(n.name) == names[r] && n.azimuth_deg == az[c];
    }
  o.require(ok == 15, "cell table");
  o.detail << ok << "/15 cells";
}

void range_gating(Outcome& o) {
  auto seen = [](const DetectionProfile& p, double d) {
    const Scene s = single_marker(Vec3(0, 0, d), Vec3(0, 0, -1), p.marker_size);
    return !detect_markers(s, make_pose(Vec3(0, 0, 0), 0.0, 0.0), CameraIntrinsics{}, p).empty();
  };
  const DetectionProfile loc = localization_profile(), nav = navigation_profile();
  const bool loc_ok = !seen(loc, 0.039) && seen(loc, 0.041) && seen(loc, 1.999) && !seen(loc, 2.001);
  const bool nav_ok = !seen(nav, 0.139) && seen(nav, 0.141) && seen(nav, 8.999) && !seen(nav, 9.001);
  o.require(loc_ok, "localization 0.04-2.00 m");
  o.require(nav_ok, "navigation 0.14-9.00 m");
  o.detail << "localization " << (loc_ok ? "ok" : "wrong") << ", navigation " << (nav_ok ? "ok" : "wrong");
}

void audio_invariants(Outcome& o) {
  const CellGrid grid;
  // ten seconds, fifteen voices, real-time sized blocks
  Mixer mixer(bundled(), grid);
  const ActiveCellSet all = audio_probe::all_cells();
  std::vector<float> out(2 * static_cast<std::size_t>(10 * kSampleRate));
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t at = 0; at < out.size(); at += 2 * 512) {
    const std::size_t n = std::min<std::size_t>(2 * 512, out.size() - at);
    mixer.render(all, std::span<float>(out).subspan(at, n));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool finite = std::all_of(out.begin(), out.end(), [](float v) { return std::isfinite(v); });
  float peak = 0.0f;
  for (float v : out) peak = std::max(peak, std::abs(v));
  o.require(finite && peak <= 1.0f, "finite and bounded");
  o.require(10.0 / seconds > kRealTimeFactor, "speed");

  // a 0.3 s voice: onsets 13230 frames apart
  Mixer single(bundled(), grid);
  ActiveCellSet one;
  one.mode = Mode::ThreeD;
  one.activations.push_back(audio_probe::activation(1, 2, 0.3));
  std::vector<float> solo(2 * static_cast<std::size_t>(10 * kSampleRate));
  single.render(one, solo);
  const auto on = audio_probe::onsets(audio_probe::channel(solo, 0),
                                      audio_probe::attack_template(synth_note(note_for_row(1).frequency_hz, 2.0)));
  long worst = 0;
  for (std::size_t i = 1; i < on.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<long>(on[i] - on[i - 1]) - 13230));
  o.require(on.size() >= 33 && worst <= kOnsetFrameTolerance, "onset spacing");

  // block-wise against offline replay of the same pose timeline
  Scene scene;
  scene.bounds = {Vec3(-2, -2, -2), Vec3(2, 2, 2)};
  scene.markers.push_back({1, Vec3(0, 0.78, 0.3), Vec3::UnitY(), 0.043, "mouse"});
  SessionLog log;
  log.header.mode = Mode::ThreeD;
  SonificationEngine engine(scene, engine_config_for(TaskKind::Localization), Mode::ThreeD);
  Mixer live(bundled(), grid);
  std::vector<float> blocks;
  const int n_blocks = 400;
  for (int b = 0; b <= n_blocks; ++b) {
    const double t = b * 512.0 / kSampleRate;
    const CameraPose pose = make_pose(Vec3(0.1 * std::sin(b * 0.05), 1.0 + 0.2 * std::cos(b * 0.03), 0.3), 0.0, -90.0);
    log.append(t, event::Pose{pose});
    const ActiveCellSet& s = engine.step(pose, t);
    if (b == n_blocks) break;
    const AudioBlock blk = render_block(s, live, 512, kSampleRate);
    blocks.insert(blocks.end(), blk.frames.begin(), blk.frames.end());
  }
  const wav::Audio offline = render_offline_audio(log, scene, bundled());
  double se = 0.0;
  const bool same_length = offline.samples.size() == blocks.size();
  if (same_length)
    for (std::size_t i = 0; i < blocks.size(); ++i) se += std::pow(double(blocks[i]) - offline.samples[i], 2);
  const double diff = same_length ? std::sqrt(se / static_cast<double>(blocks.size())) : INFINITY;
  o.require(diff < kBlockOfflineRms, "block-wise vs offline");

  o.detail << "peak " << peak << (finite ? ", no NaN" : ", NaN present") << "; " << on.size()
           << " onsets, worst spacing error " << worst << " frames (tol " << kOnsetFrameTolerance << "); block/offline RMS "
           << diff << " (tol " << kBlockOfflineRms << "); ";
  fixed(o.detail, 1) << 10.0 / seconds << "x real time (min " << kRealTimeFactor << ")";
}

void spatialization(Outcome& o) {
  const NoteSample note = synth_note(note_for_row(1).frequency_hz, 2.0);
  const CellGrid grid;
  double prev = INFINITY;
  bool decreasing = true;
  for (int col = 0; col < CellGrid::kCols; ++col) {
    const std::vector<float> out = spatialize(note, azimuth_for_col(col, grid), bundled());
    const double d = audio_probe::rms(audio_probe::channel(out, 0)) - audio_probe::rms(audio_probe::channel(out, 1));
    decreasing = decreasing && d < prev;
    o.detail << (col ? ", " : "L-R RMS ") << std::setprecision(4) << d;
    prev = d;
  }
  o.require(decreasing, "strictly decreasing");
}

void stats_oracle(Outcome& o) {
  using namespace echogrid::stats;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  double worst_t = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd y(8, 2);
    for (int i = 0; i < 8; ++i) {
      const double subject = 3.0 * n01(rng);
      y(i, 0) = subject + n01(rng);
      y(i, 1) = subject + 0.5 + n01(rng);
    }
    const Eigen::VectorXd d = y.col(1) - y.col(0);
    const double sd = std::sqrt((d.array() - d.mean()).square().sum() / 7.0);
    const double t = d.mean() / (sd / std::sqrt(8.0));
    worst_t = std::max(worst_t, std::abs(anova_rm_one(y).F - t * t) / (t * t));
  }
  o.require(worst_t <= kPairedTRelTolerance, "paired t^2");

  double worst_ss = 0.0;
  auto track = [&](double got, double want) { worst_ss = std::max(worst_ss, std::abs(got - want) / std::max(1.0, std::abs(want))); };
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd y(7, 6);
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) = 10 + n01(rng) + 0.3 * double(j) + 0.7 * double(i);
    const auto one = ss_oracle::rm_one(y);
    const AnovaResult r1 = anova_rm_one(y);
    track(r1.ss_effect, one.ss_effect);
    track(r1.ss_error, one.ss_error);
    track(r1.F, one.F());
    const auto two = ss_oracle::rm_two(y, 2, 3);
    const auto r2 = anova_rm_two(y, 2, 3);
    for (int e = 0; e < 3; ++e) {
      track(r2[e].ss_effect, two[e].ss_effect);
      track(r2[e].ss_error, two[e].ss_error);
      track(r2[e].F, two[e].F());
    }
    std::vector<std::vector<std::vector<double>>> cells(2, std::vector<std::vector<double>>(3));
    std::vector<double> values;
    std::vector<int> la, lb;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j)
        for (int r = 0; r < 5; ++r) {
          const double v = 5 + n01(rng) + 0.4 * i + 0.2 * j * i;
          cells[i][j].push_back(v);
          values.push_back(v);
          la.push_back(i);
          lb.push_back(j);
        }
    const auto bw = ss_oracle::between_two(cells);
    const auto rb = anova_between_two(values, la, lb);
    for (int e = 0; e < 3; ++e) {
      track(rb[e].ss_effect, bw[e].ss_effect);
      track(rb[e].ss_error, bw[e].ss_error);
      track(rb[e].F, bw[e].F());
    }
  }
  o.require(worst_ss <= kSsRelTolerance, "sum-of-squares oracle");

  struct Triple {
    double F, df1, df2, p;
  };
  const Triple triples[] = {{6.188, 1, 7, 0.042}, {4.796, 1, 14, 0.046}, {4.915, 1, 26, 0.036}, {6.714, 1, 26, 0.016}};
  o.detail << "paired t^2 rel err " << std::setprecision(2) << worst_t << ", SS oracle rel err " << worst_ss << "; p:";
  for (const Triple& t : triples) {
    const double p = f_sf(t.F, t.df1, t.df2);
    const bool ok = std::abs(p - t.p) <= kPaperPTolerance;
    o.require(ok, "F(" + std::to_string(t.df1).substr(0, 1) + "," + std::to_string(int(t.df2)) + ")=" +
                      std::to_string(t.F).substr(0, 5) + " gives p " + std::to_string(p).substr(0, 8) + ", published " +
                      std::to_string(t.p).substr(0, 5));
    fixed(o.detail, 6) << " " << p << (ok ? "" : "*");
  }
  const double pr = pearson_p(0.104, 30);
  o.require(std::abs(pr - 0.571) <= kPearsonPTolerance, "pearson p");
  fixed(o.detail, 4) << "; r=0.104 df=30 -> p " << pr << " (tolerance " << kPaperPTolerance << " for the F triples, " << kPearsonPTolerance << " for r)";
}

void boxplots(Outcome& o) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> size(1, 60);
  int mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(size(rng)));
    for (double& x : v) x = std::round(n01(rng) * 4.0) / 2.0 + (trial % 3 == 0 ? std::pow(n01(rng), 3) : 0.0);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    auto q = [&](double p) {
      const double pos = p * double(s.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = static_cast<std::size_t>(std::ceil(pos));
      return s[lo] + (pos - double(lo)) * (s[hi] - s[lo]);
    };
    const double q1 = q(0.25), q3 = q(0.75), iqr = q3 - q1;
    std::vector<double> brute;
    for (double x : s)
      if (x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr) brute.push_back(x);
    mismatches += stats::boxplot_summary(v).outliers != brute;
  }
  o.require(mismatches == 0, "outlier sets");
  o.detail << "10000 datasets, " << mismatches << " mismatches";
}

void agents(Outcome& o) {
  int oracle_missed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const NavigationTask task = gen_navigation(seed);
    oracle_missed += judge_obstacles(run_scripted(AgentKind::Oracle, task, Mode::ThreeD, seed), task).missed_count;
  }
  o.require(oracle_missed == 0, "oracle misses nothing");

  double worst_sweep = 0.0, sum_sweep = 0.0;
  int incomplete = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const LocalizationTask task = gen_localization(seed);
    const LocalizationResult r = judge_localization(run_scripted(AgentKind::Sweep, task, Mode::ThreeD, seed), task);
    incomplete += r.objects.size() != 3;
    double sum = 0.0;
    for (const auto& obj : r.objects) sum += obj.error_distance;
    worst_sweep = std::max(worst_sweep, sum / 3);
    sum_sweep += sum / 3;
  }
  o.require(incomplete == 0 && worst_sweep < kSweepMeanError, "sweep localizes");

  Eigen::MatrixXd missed(100, 2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const NavigationTask task = gen_navigation(seed);
    for (int m = 0; m < 2; ++m) {
      const Mode mode = m ? Mode::ThreeD : Mode::TwoD;
      missed(Eigen::Index(seed), m) = judge_obstacles(run_scripted(AgentKind::UpDownRanger, task, mode, seed), task).missed_count;
    }
  }
  const double mean2d = missed.col(0).mean(), mean3d = missed.col(1).mean();
  const stats::AnovaResult a = stats::anova_rm_one(missed, "mode");
  o.require(mean2d <= kUpDownMeanMissed && mean3d <= kUpDownMeanMissed, "up-down mean missed");
  o.require(a.p > kModeDifferenceAlpha, "2D vs 3D not significant");
  fixed(o.detail, 3) << "oracle missed " << oracle_missed << "/100 courses; sweep mean error " << sum_sweep / 100
                     << " m, worst seed " << worst_sweep << " m (max " << kSweepMeanError << "); up-down missed 2D "
                     << mean2d << ", 3D " << mean3d << " (max " << kUpDownMeanMissed << "), F(" << a.df1 << ", " << a.df2
                     << ") = " << a.F << ", p = " << a.p << " (> " << kModeDifferenceAlpha << ")";
}

void pointing(Outcome& o) {
  const Vec3 target(0.0, 0.78, 0.4);
  const Vec3 dir = Vec3(0.0, 1.0, -1.0).normalized();
  auto mean_error = [&](double standoff, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const PointingNoise noise{3.0, target + standoff * dir, &rng};
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const Vec2 hit = perturb_pointing(Vec2(target.x(), target.z()), target.y(), noise);
      sum += std::hypot(hit.x() - target.x(), hit.y() - target.z());
    }
    return sum / 100000;
  };
  const double near = mean_error(0.2, 101), far = mean_error(1.0, 202);
  const double ratio = far / near;
  o.require(std::abs(ratio - kPointingRatio) <= kPointingRatio * kPointingRatioTolerance, "ratio");
  fixed(o.detail, 4) << "sigma 3 deg: 0.2 m -> " << near * 100 << " cm, 1.0 m -> " << far * 100 << " cm, ratio " << ratio
                     << " (5 +/- 10%)";
}

void protocol(Outcome& o) {
  int violations = 0, replay_failures = 0, deepest = 0;
  std::string first;
  for (std::uint64_t seq = 0; seq < 10000; ++seq) {
    const int steps = 30 + static_cast<int>(seq % 50);
    const std::string f = protocol_traffic::check_sequence(seq, steps, deepest);
    if (!f.empty()) {
      ++violations;
      if (first.empty()) first = f;
    }
    replay_failures += !protocol_traffic::replay_matches(seq, steps);
  }
  o.require(violations == 0, "phase order: " + first);
  o.require(replay_failures == 0, "replay");
  o.detail << "10000 sequences, " << violations << " violations, " << replay_failures << " replay mismatches, deepest phase "
           << deepest << "/" << server::progress_rank(server::Phase::Finished, 0);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + ECHOGRID_CLI + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(Outcome& o) {
  // in process
  const auto loc = gen_localization(17);
  const auto nav = gen_navigation(course_seed(17, 2));
  const bool scene_same = scene_to_config(loc.scene()) == scene_to_config(gen_localization(17).scene()) &&
                          scene_to_config(nav.scene()) == scene_to_config(gen_navigation(course_seed(17, 2)).scene());
  bool task_same = true;
  for (int i = 0; i < 8; ++i)
    task_same = task_same && nav.obstacles[i].position == gen_navigation(course_seed(17, 2)).obstacles[i].position;
  const SessionLog a = run_scripted(AgentKind::UpDownRanger, nav, Mode::ThreeD, 17);
  const bool sim_same = to_jsonl(a) == to_jsonl(run_scripted(AgentKind::UpDownRanger, nav, Mode::ThreeD, 17));
  const SessionLog l = run_scripted(AgentKind::Sweep, loc, Mode::ThreeD, 17);
  const bool wav_same = render_offline(l, loc.scene(), bundled()) == render_offline(l, loc.scene(), bundled());
  batch::CrossoverOptions opt;
  opt.participants = 2;
  const auto plan = batch::plan_crossover(opt);
  const bool csv_same = batch::summary_csv(batch::run_all(plan)) == batch::summary_csv(batch::run_all(plan));

  // and across processes, through the command line
  const fs::path dir = fs::temp_directory_path() / ("echogrid-acceptance-" + std::to_string(std::random_device{}()));
  bool cli_same = true;
  for (const char* run : {"a", "b"}) {
    const std::string out = (dir / run).string();
    cli_same = cli_same && run_cli("--seed 17 --out-dir '" + out + "' gen-scene") == 0 &&
               run_cli("--out-dir '" + out + "' simulate --task localization --mode 3d --seeds 17") == 0 &&
               run_cli("--out-dir '" + out + "' render --log '" + out + "/logs/localization-17.jsonl' -o '" + out + "/r.wav'") == 0;
  }
  for (const char* f : {"scene-localization-17.json", "logs/localization-17.jsonl", "summary.csv", "r.wav"}) {
    const std::string x = slurp(dir / "a" / f);
    cli_same = cli_same && !x.empty() && x == slurp(dir / "b" / f);
  }
  fs::remove_all(dir);

  o.require(scene_same, "scene");
  o.require(task_same, "task");
  o.require(sim_same, "simulation");
  o.require(wav_same, "wav");
  o.require(csv_same, "csv");
  o.require(cli_same, "command line");
  o.detail << "scene, task, simulation, WAV and CSV identical in process" << (cli_same ? " and across two CLI runs" : "");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"encoding exactness", encoding},
      {"grid and note mapping", grid_table},
      {"range gating", range_gating},
      {"audio invariants", audio_invariants},
      {"spatialization direction", spatialization},
      {"statistics oracle", stats_oracle},
      {"boxplot rule", boxplots},
      {"agents end to end", agents},
      {"pointing-noise geometry", pointing},
      {"protocol state machine", protocol},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria pass" << std::endl;
  return failures;
}
