#include "echogrid/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>

namespace echogrid {

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::Sweep: return "sweep";
    case AgentKind::UpDownRanger: return "updown";
    case AgentKind::Oracle: return "oracle";
  }
  return "?";
}

AgentKind parse_agent_kind(std::string_view text) {
  std::string s;
  for (char c : text)
    if (c != '-' && c != '_') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "sweep") return AgentKind::Sweep;
  if (s == "updown" || s == "updownranger") return AgentKind::UpDownRanger;
  if (s == "oracle") return AgentKind::Oracle;
  throw std::invalid_argument("unknown agent '" + std::string(text) + "'");
}

SonificationEngine::Config engine_config_for(TaskKind task) {
  SonificationEngine::Config config;
  config.profile = task == TaskKind::Localization ? localization_profile() : navigation_profile();
  return config;
}

namespace {

// What the agent hears: one entry per sounding cell.
struct Percept {
  CellId cell;
  int marker_id = 0;
  double period = 0.0;
};

struct Observation {
  double t = 0.0;
  CameraPose pose;
  std::vector<Percept> percepts;
};

struct Command {
  enum class Kind { Move, Observe, Submit, Report, End };
  Kind kind = Kind::End;
  CameraPose target;
  Vec2 point = Vec2::Zero();

  static Command move(const CameraPose& p) { return {Kind::Move, p, Vec2::Zero()}; }
  static Command observe() { return {Kind::Observe, {}, Vec2::Zero()}; }
  static Command submit(const Vec2& xz) { return {Kind::Submit, {}, xz}; }
  static Command report(const Vec2& xz) { return {Kind::Report, {}, xz}; }
  static Command end() { return {}; }
};

using Queue = std::deque<Command>;

class Agent {
public:
  virtual ~Agent() = default;
  /// Called whenever the command queue runs dry.
  virtual void plan(Queue& queue) = 0;
  virtual void observe(const Observation&) {}
};

Vec2 cell_center(CellId cell) {
  return {(cell.col + 0.5) / CellGrid::kCols, (cell.row + 0.5) / CellGrid::kRows};
}

CameraPose looking_down(double x, double y, double z) { return make_pose(Vec3(x, y, z), 0.0, -90.0); }

// ---------------------------------------------------------------------------

class SweepAgent final : public Agent {
public:
  SweepAgent(const TableSpec& table, const CameraIntrinsics& intr) : table_(table), intr_(intr) {}

  void plan(Queue& q) override {
    switch (phase_) {
      case Phase::Start: {
        const double h = table_.height + kRasterHeight;
        bool reverse = false;
        for (double z : {0.2, 0.6}) {
          std::array<double, 3> xs{-0.5, 0.0, 0.5};
          if (reverse) std::reverse(xs.begin(), xs.end());
          for (double x : xs) {
            q.push_back(Command::move(looking_down(x, h, z)));
            q.push_back(Command::observe());
          }
          reverse = !reverse;
        }
        phase_ = Phase::Raster;
        return;
      }
      case Phase::Raster:
        phase_ = Phase::Refine;
        [[fallthrough]];
      case Phase::Refine: refine(q); return;
      case Phase::Done: q.push_back(Command::end()); return;
    }
  }

  void observe(const Observation& obs) override {
    if (phase_ == Phase::Raster) {
      for (const Percept& p : obs.percepts) {
        const bool known = std::any_of(targets_.begin(), targets_.end(),
                                       [&](const Target& t) { return t.marker_id == p.marker_id; });
        if (!known) targets_.push_back({p.marker_id, estimate(obs.pose, p.cell), false});
      }
      return;
    }
    if (current_ >= targets_.size()) return;
    Target& tg = targets_[current_];
    tg.centered = false;
    for (const Percept& p : obs.percepts) {
      if (p.marker_id != tg.marker_id) continue;
      tg.estimate = estimate(obs.pose, p.cell);
      tg.centered = p.cell == CellId{1, 2};
    }
  }

private:
  enum class Phase { Start, Raster, Refine, Done };
  struct Target {
    int marker_id;
    Vec2 estimate;
    bool centered;
  };

  static constexpr double kRasterHeight = 0.55;
  static constexpr std::array<double, 2> kStandoff{0.3, 0.15};
  static constexpr int kMaxCentering = 4;

  Vec2 estimate(const CameraPose& pose, CellId cell) const {
    const Vec3 ray = image_ray(pose, intr_, cell_center(cell));
    const auto hit = intersect_horizontal(pose.position, ray, table_.height);
    if (!hit) return {pose.position.x(), pose.position.z()};
    return {hit->x(), hit->z()};
  }

  void refine(Queue& q) {
    if (current_ >= targets_.size()) {
      phase_ = Phase::Done;
      q.push_back(Command::end());
      return;
    }
    Target& tg = targets_[current_];
    if (awaiting_) {
      awaiting_ = false;
      ++iteration_;
      if (tg.centered || iteration_ >= kMaxCentering) {
        iteration_ = 0;
        if (++stage_ == kStandoff.size()) {
          q.push_back(Command::submit(tg.estimate));
          stage_ = 0;
          ++current_;
          return;
        }
      }
    }
    q.push_back(Command::move(looking_down(tg.estimate.x(), table_.height + kStandoff[stage_], tg.estimate.y())));
    q.push_back(Command::observe());
    awaiting_ = true;
  }

  TableSpec table_;
  CameraIntrinsics intr_;
  Phase phase_ = Phase::Start;
  std::vector<Target> targets_;
  std::size_t current_ = 0;
  std::size_t stage_ = 0;
  int iteration_ = 0;
  bool awaiting_ = false;
};

class TableOracle final : public Agent {
public:
  explicit TableOracle(const LocalizationTask& task) : task_(task) {}

  void plan(Queue& q) override {
    if (done_) {
      q.push_back(Command::end());
      return;
    }
    for (const auto& o : task_.objects) {
      q.push_back(Command::move(looking_down(o.position.x(), task_.table.height + 0.15, o.position.z())));
      q.push_back(Command::submit({o.position.x(), o.position.z()}));
    }
    done_ = true;
  }

private:
  const LocalizationTask& task_;
  bool done_ = false;
};

// ---------------------------------------------------------------------------

// Follows a planned path for at most `leg` meters; returns the final position.
Vec2 push_walk(Queue& q, const std::vector<Vec2>& path, Vec2 from, double leg, double height) {
  double walked = 0.0;
  for (const Vec2& w : path) {
    walked += (w - from).norm();
    q.push_back(Command::move(make_pose(Vec3(w.x(), height, w.y()), 0.0, -20.0)));
    from = w;
    if (walked >= leg) break;
  }
  return from;
}

class UpDownRanger final : public Agent {
public:
  UpDownRanger(const CorridorSpec& corridor, const CameraIntrinsics& intr, double height)
      : corridor_(corridor), intr_(intr), height_(height), pos_(0.0, corridor.start_z) {}

  void plan(Queue& q) override {
    if (pos_.y() >= corridor_.finish_z) {
      q.push_back(Command::end());
      return;
    }
    if (sweep_next_) {
      push_sweep(q);
      sweep_next_ = false;
      return;
    }
    digest(q);
    walk(q);
    sweep_next_ = true;
  }

  // Only the cell (note and azimuth) is used; the loop period is ignored.
  void observe(const Observation& obs) override {
    for (const Percept& p : obs.percepts) {
      const Vec3 ray = image_ray(obs.pose, intr_, cell_center(p.cell));
      sightings_[p.marker_id].push_back({std::atan2(ray.x(), ray.z()), std::asin(std::clamp(ray.y(), -1.0, 1.0))});
    }
  }

private:
  struct Bearing {
    double azimuth;
    double elevation;
  };

  static constexpr double kLeg = 1.5;
  static constexpr double kMaxRange = 4.0;
  static constexpr double kReportNear = 0.6;
  static constexpr double kReportFar = 3.0;
  static constexpr double kAssumedDepth = 0.2;  // marker to object center
  static constexpr double kAssumedRadius = 0.3;

  void push_sweep(Queue& q) {
    bool upward = true;
    for (int yaw = -40; yaw <= 40; yaw += 10) {
      for (int i = 0; i <= 22; ++i) {
        const double pitch = upward ? -60.0 + 2.5 * i : -5.0 - 2.5 * i;
        q.push_back(Command::move(make_pose(Vec3(pos_.x(), height_, pos_.y()), double(yaw), pitch)));
        q.push_back(Command::observe());
      }
      upward = !upward;
    }
  }

  void digest(Queue& q) {
    const Vec3 eye(pos_.x(), height_, pos_.y());
    for (const auto& [id, seen] : sightings_) {
      double az = 0.0, el = 0.0;
      for (const Bearing& b : seen) {
        az += b.azimuth;
        el += b.elevation;
      }
      az /= double(seen.size());
      el /= double(seen.size());
      const Vec3 dir(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
      const auto hit = intersect_horizontal(eye, dir, corridor_.marker_height);
      if (!hit) continue;
      const Vec2 marker(hit->x(), hit->z());
      const double d = (marker - pos_).norm();
      if (d > kMaxRange || d <= 0.0) continue;
      const Vec2 center = marker + kAssumedDepth * (marker - pos_) / d;
      belief_[id] = center;
      if (d >= kReportNear && d <= kReportFar) q.push_back(Command::report(center));
    }
    sightings_.clear();
  }

  void walk(Queue& q) {
    std::vector<Circle> circles;
    for (const auto& [id, c] : belief_) circles.push_back({c, kAssumedRadius});
    for (double clearance : {corridor_.path_clearance, 0.35, 0.2, 0.0}) {
      if (const auto path = find_path(corridor_, circles, pos_, clearance)) {
        pos_ = push_walk(q, *path, pos_, kLeg, height_);
        return;
      }
    }
    pos_ = Vec2(pos_.x(), std::min(corridor_.finish_z, pos_.y() + 1.0));
    q.push_back(Command::move(make_pose(Vec3(pos_.x(), height_, pos_.y()), 0.0, -20.0)));
  }

  CorridorSpec corridor_;
  CameraIntrinsics intr_;
  double height_;
  Vec2 pos_;
  bool sweep_next_ = true;
  std::map<int, std::vector<Bearing>> sightings_;
  std::map<int, Vec2> belief_;
};

class CorridorOracle final : public Agent {
public:
  CorridorOracle(const NavigationTask& task, double height) : task_(task), height_(height) {}

  void plan(Queue& q) override {
    if (done_) {
      q.push_back(Command::end());
      return;
    }
    done_ = true;
    std::vector<Circle> circles;
    for (const Obstacle& o : task_.obstacles) {
      q.push_back(Command::report(o.position));
      circles.push_back({o.position, o.radius});
    }
    const Vec2 start(0.0, task_.corridor.start_z);
    const auto path = find_path(task_.corridor, circles, start, task_.corridor.path_clearance);
    if (!path) throw std::logic_error("generated corridor has no clear path");
    push_walk(q, *path, start, std::numeric_limits<double>::infinity(), height_);
  }

private:
  const NavigationTask& task_;
  double height_;
  bool done_ = false;
};

// ---------------------------------------------------------------------------

struct Limits {
  double speed;
  double turn_rate;
};

CameraPose step_toward(const CameraPose& pose, const CameraPose& target, const Limits& limits, double dt) {
  CameraPose next = pose;
  const Vec3 delta = target.position - pose.position;
  const double dist = delta.norm();
  const double max_step = limits.speed * dt;
  next.position = dist <= max_step ? target.position : Vec3(pose.position + delta * (max_step / dist));
  const double max_turn = limits.turn_rate * dt;
  const double dyaw = normalize_yaw(target.yaw_deg - pose.yaw_deg);
  next.yaw_deg = std::abs(dyaw) <= max_turn ? target.yaw_deg : normalize_yaw(pose.yaw_deg + std::copysign(max_turn, dyaw));
  const double dpitch = target.pitch_deg - pose.pitch_deg;
  next.pitch_deg = std::abs(dpitch) <= max_turn ? target.pitch_deg : pose.pitch_deg + std::copysign(max_turn, dpitch);
  return next;
}

bool same_pose(const CameraPose& a, const CameraPose& b) {
  return a.position == b.position && a.yaw_deg == b.yaw_deg && a.pitch_deg == b.pitch_deg;
}

struct LoopHooks {
  std::function<Vec2(const Vec2&, const CameraPose&)> submit;  // intended point -> logged point
  std::function<void(double, const CameraPose&, SessionLog&)> after_pose;
};

SessionLog run_loop(Agent& agent, SonificationEngine& engine, CameraPose pose, SessionLog log, const Limits& limits,
                    const SimConfig& config, double budget_seconds, const LoopHooks& hooks) {
  if (!(config.tick_hz > 0.0)) throw std::invalid_argument("tick rate must be positive");
  const double dt = 1.0 / config.tick_hz;
  const auto max_ticks = static_cast<std::uint64_t>(std::ceil(budget_seconds * config.tick_hz));
  log.append(0.0, event::ModeSet{engine.mode()});
  log.append(0.0, event::TaskStart{});
  Queue queue;
  for (std::uint64_t k = 0; k <= max_ticks; ++k) {
    const double t = static_cast<double>(k) / config.tick_hz;
    log.append(t, event::Pose{pose});
    const ActiveCellSet& state = engine.step(pose, t);
    if (hooks.after_pose) hooks.after_pose(t, pose, log);
    int replans = 0;
    for (bool moved = false; !moved;) {
      if (queue.empty()) {
        if (++replans > 1000) throw std::logic_error("agent keeps planning without acting");
        agent.plan(queue);
        if (queue.empty()) queue.push_back(Command::end());
      }
      const Command c = queue.front();
      switch (c.kind) {
        case Command::Kind::Move:
          if (same_pose(pose, c.target)) {
            queue.pop_front();
          } else {
            pose = step_toward(pose, c.target, limits, dt);
            moved = true;
          }
          break;
        case Command::Kind::Observe: {
          Observation obs{t, pose, {}};
          for (const CellActivation& a : state.activations) obs.percepts.push_back({a.cell, a.marker_id, a.period});
          queue.pop_front();
          agent.observe(obs);
          break;
        }
        case Command::Kind::Submit: {
          const Vec2 p = hooks.submit ? hooks.submit(c.point, pose) : c.point;
          log.append(t, event::PointSubmit{p.x(), p.y()});
          queue.pop_front();
          break;
        }
        case Command::Kind::Report:
          log.append(t, event::ObstacleReport{c.point.x(), c.point.y()});
          queue.pop_front();
          break;
        case Command::Kind::End:
          log.append(t, event::TaskEnd{});
          log.header.complete = true;
          return log;
      }
    }
  }
  log.header.complete = false;
  return log;
}

SessionLog make_log(TaskKind task, Mode mode, std::uint64_t seed, AgentKind agent) {
  SessionLog log;
  log.header.task = task;
  log.header.mode = mode;
  log.header.seed = seed;
  log.header.agent = std::string(to_string(agent));
  return log;
}

SonificationEngine::Config sim_engine_config(TaskKind task, const SimConfig& config) {
  SonificationEngine::Config c = engine_config_for(task);
  c.intrinsics = config.intrinsics;
  c.grid = config.grid;
  c.detect = config.detect;
  return c;
}

}  // namespace

SessionLog run_scripted(AgentKind agent, const LocalizationTask& task, Mode mode, std::uint64_t seed,
                        const SimConfig& config) {
  std::unique_ptr<Agent> a;
  if (agent == AgentKind::Sweep) a = std::make_unique<SweepAgent>(task.table, config.intrinsics);
  else if (agent == AgentKind::Oracle) a = std::make_unique<TableOracle>(task);
  else throw std::invalid_argument("agent '" + std::string(to_string(agent)) + "' cannot run the localization task");

  SonificationEngine engine(task.scene(), sim_engine_config(TaskKind::Localization, config), mode);
  std::mt19937_64 rng(seed);
  LoopHooks hooks;
  if (agent != AgentKind::Oracle && config.pointing_sigma_deg > 0.0) {
    hooks.submit = [&](const Vec2& p, const CameraPose& pose) {
      return perturb_pointing(p, task.table.height, {config.pointing_sigma_deg, pose.position, &rng});
    };
  }
  const CameraPose start = looking_down(0.0, task.table.height + 0.55, 0.0);
  const double budget = config.max_seconds > 0.0 ? config.max_seconds : 300.0;
  return run_loop(*a, engine, start, make_log(TaskKind::Localization, mode, task.seed, agent),
                  {config.hand_speed, config.turn_rate_deg}, config, budget, hooks);
}

SessionLog run_scripted(AgentKind agent, const NavigationTask& task, Mode mode, std::uint64_t seed,
                        const SimConfig& config) {
  (void)seed;  // both navigation agents are deterministic given the layout
  std::unique_ptr<Agent> a;
  if (agent == AgentKind::UpDownRanger) a = std::make_unique<UpDownRanger>(task.corridor, config.intrinsics, config.device_height);
  else if (agent == AgentKind::Oracle) a = std::make_unique<CorridorOracle>(task, config.device_height);
  else throw std::invalid_argument("agent '" + std::string(to_string(agent)) + "' cannot run the navigation task");

  SonificationEngine engine(task.scene(), sim_engine_config(TaskKind::Navigation, config), mode);
  std::vector<bool> inside(task.obstacles.size(), false);
  LoopHooks hooks;
  hooks.after_pose = [&](double t, const CameraPose& pose, SessionLog& log) {
    const Vec2 xz(pose.position.x(), pose.position.z());
    for (const Obstacle& o : task.obstacles) {
      const bool now_inside = (xz - o.position).norm() < o.radius + config.collision_margin;
      if (now_inside && !inside[static_cast<std::size_t>(o.index)]) log.append(t, event::Collision{o.index});
      inside[static_cast<std::size_t>(o.index)] = now_inside;
    }
  };
  const CameraPose start = make_pose(Vec3(0.0, config.device_height, task.corridor.start_z), 0.0, -20.0);
  const double budget = config.max_seconds > 0.0 ? config.max_seconds : 900.0;
  return run_loop(*a, engine, start, make_log(TaskKind::Navigation, mode, task.seed, agent),
                  {config.walk_speed, config.turn_rate_deg}, config, budget, hooks);
}

}  // namespace echogrid
