#include "echogrid/tasks.hpp"

#include "echogrid/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace echogrid {

// ---------------------------------------------------------------------------
// Localization

namespace {

constexpr std::array<const char*, 3> kTableObjects{"mouse", "phone", "flashlight"};

double planar_distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x() - b.x(), a.z() - b.z()); }

}  // namespace

const LocalizationObject& LocalizationTask::object(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return o;
  throw std::invalid_argument("unknown object id " + std::to_string(id));
}

Scene LocalizationTask::scene() const {
  Scene s;
  s.bounds = {Vec3(-1.5, 0.0, -1.0), Vec3(1.5, 2.5, 1.5)};
  for (const auto& o : objects) s.markers.push_back({o.id, o.position, Vec3::UnitY(), 0.043, o.label});
  s.meta = {std::string(to_string(TaskKind::Localization)), seed};
  return s;
}

LocalizationTask gen_localization(std::uint64_t seed) {
  LocalizationTask task;
  task.seed = seed;
  const TableSpec& t = task.table;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-t.width / 2 + t.edge_margin, t.width / 2 - t.edge_margin);
  std::uniform_real_distribution<double> uz(t.edge_margin, t.depth - t.edge_margin);
  const Vec3 participant = t.participant_point();
  for (std::size_t i = 0; i < task.objects.size(); ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1'000'000) throw std::logic_error("table placement did not converge");
      const Vec3 p(ux(rng), t.marker_height(), uz(rng));
      const double r = planar_distance(p, participant);
      if (r < t.min_placement || r > t.max_placement) continue;
      const bool separated = std::all_of(task.objects.begin(), task.objects.begin() + static_cast<long>(i),
                                         [&](const LocalizationObject& o) {
                                           return planar_distance(o.position, p) >= t.min_separation;
                                         });
      if (!separated) continue;
      task.objects[i] = {static_cast<int>(i) + 1, kTableObjects[i], p};
      break;
    }
  }
  return task;
}

Vec2 perturb_pointing(const Vec2& intended_xz, double plane_height, const PointingNoise& noise) {
  if (!noise.rng) throw std::invalid_argument("pointing noise needs a random generator");
  const Vec3 target(intended_xz.x(), plane_height, intended_xz.y());
  const Vec3 d = (target - noise.origin).normalized();
  Vec3 e1 = d.cross(Vec3::UnitY());
  if (e1.norm() < 1e-9) e1 = Vec3::UnitX();
  e1.normalize();
  const Vec3 e2 = d.cross(e1);
  std::normal_distribution<double> angle(0.0, deg_to_rad(noise.sigma_deg));
  const double a1 = angle(*noise.rng);
  const double a2 = angle(*noise.rng);
  const Vec3 dir = (d + std::tan(a1) * e1 + std::tan(a2) * e2).normalized();
  const auto hit = intersect_horizontal(noise.origin, dir, plane_height);
  if (!hit) return intended_xz;
  return {hit->x(), hit->z()};
}

double score_pointing(const LocalizationTask& task, int object_id, const Vec2& submitted_xz,
                      const std::optional<PointingNoise>& noise) {
  const LocalizationObject& o = task.object(object_id);
  Vec2 p = submitted_xz;
  if (noise) p = perturb_pointing(submitted_xz, task.table.height, *noise);
  return std::hypot(p.x() - o.position.x(), p.y() - o.position.z());
}

LocalizationResult judge_localization(const SessionLog& log, const LocalizationTask& task) {
  if (!log.has_complete_events()) throw DataError("incomplete localization log");
  const double start = *log.start_time();
  LocalizationResult result;
  result.total_time = *log.end_time() - start;
  std::vector<int> remaining;
  for (const auto& o : task.objects) remaining.push_back(o.id);
  double last = start;
  for (const auto& e : log.events) {
    const auto* submit = std::get_if<event::PointSubmit>(&e.payload);
    if (!submit || remaining.empty()) continue;
    const Vec2 p(submit->x, submit->z);
    auto best = remaining.begin();
    double best_d = std::numeric_limits<double>::infinity();
    for (auto it = remaining.begin(); it != remaining.end(); ++it) {
      const double d = score_pointing(task, *it, p);
      if (d < best_d) {
        best_d = d;
        best = it;
      }
    }
    result.objects.push_back({*best, e.t - last, best_d});
    last = e.t;
    remaining.erase(best);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Navigation

namespace {

struct ObstacleKind {
  const char* label;
  double radius;
};

constexpr std::array<ObstacleKind, 8> kCorridorObstacles{{{"chair", 0.3},
                                                          {"chair", 0.3},
                                                          {"garbage bin", 0.2},
                                                          {"garbage bin", 0.2},
                                                          {"bag", 0.15},
                                                          {"bag", 0.15},
                                                          {"cardboard box", 0.25},
                                                          {"cardboard box", 0.25}}};

constexpr int kLayoutRetries = 200;

}  // namespace

Scene NavigationTask::scene() const {
  Scene s;
  s.bounds = {Vec3(-corridor.width / 2, 0.0, 0.0), Vec3(corridor.width / 2, 3.0, corridor.length)};
  for (const Obstacle& o : obstacles) {
    const double y = corridor.marker_height;
    s.markers.push_back({o.front_marker, Vec3(o.position.x(), y, o.position.y() - o.radius), -Vec3::UnitZ(),
                         corridor.marker_size, o.label});
    s.markers.push_back({o.back_marker, Vec3(o.position.x(), y, o.position.y() + o.radius), Vec3::UnitZ(),
                         corridor.marker_size, o.label});
    s.colliders.push_back({Vec3(o.position.x(), y, o.position.y()), o.radius, o.label});
  }
  s.meta = {std::string(to_string(TaskKind::Navigation)), seed};
  return s;
}

std::uint64_t course_seed(std::uint64_t base, int course) {
  if (course < 1 || course > 3) throw std::invalid_argument("course must be 1, 2 or 3");
  // splitmix64 finalizer over the packed pair
  std::uint64_t z = base * 4 + static_cast<std::uint64_t>(course) + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  // 53 bits, so the seed survives a round trip through a JavaScript number.
  return (z ^ (z >> 31)) & ((std::uint64_t{1} << 53) - 1);
}

NavigationTask gen_navigation(std::uint64_t seed) {
  NavigationTask task;
  task.seed = seed;
  const CorridorSpec& c = task.corridor;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-c.width / 2 + c.wall_margin, c.width / 2 - c.wall_margin);
  std::uniform_real_distribution<double> uz(c.min_obstacle_z, c.max_obstacle_z);

  for (int attempt = 0; attempt < kLayoutRetries; ++attempt) {
    task.obstacles.clear();
    for (std::size_t i = 0; i < kCorridorObstacles.size(); ++i) {
      Vec2 p;
      for (int tries = 0;; ++tries) {
        if (tries > 100'000) throw std::logic_error("obstacle placement did not converge");
        p = Vec2(ux(rng), uz(rng));
        const bool separated = std::all_of(task.obstacles.begin(), task.obstacles.end(), [&](const Obstacle& o) {
          return (o.position - p).norm() >= c.min_separation;
        });
        if (separated) break;
      }
      const int idx = static_cast<int>(i);
      task.obstacles.push_back(
          {idx, kCorridorObstacles[i].label, p, kCorridorObstacles[i].radius, 2 * idx + 1, 2 * idx + 2});
    }
    std::vector<Circle> circles;
    for (const Obstacle& o : task.obstacles) circles.push_back({o.position, o.radius});
    if (find_path(c, circles, Vec2(0.0, c.start_z), c.path_clearance)) return task;
  }
  throw DataError("navigation layout generation failed for seed " + std::to_string(seed));
}

std::optional<std::vector<Vec2>> find_path(const CorridorSpec& corridor, const std::vector<Circle>& obstacles,
                                           const Vec2& from, double clearance, double cell) {
  const double x0 = -corridor.width / 2;
  const int nx = static_cast<int>(std::floor(corridor.width / cell + 1e-9)) + 1;
  const int nz = static_cast<int>(std::floor(corridor.length / cell + 1e-9)) + 1;
  auto world = [&](int i, int j) { return Vec2(x0 + i * cell, j * cell); };
  std::vector<char> free(static_cast<std::size_t>(nx * nz), 0);
  for (int j = 0; j < nz; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec2 p = world(i, j);
      bool ok = p.x() - x0 >= clearance && -x0 - p.x() >= clearance;
      for (const Circle& o : obstacles) {
        if (!ok) break;
        ok = (p - o.center).norm() - o.radius >= clearance;
      }
      free[static_cast<std::size_t>(j * nx + i)] = ok ? 1 : 0;
    }
  }
  const int si = std::clamp(static_cast<int>(std::lround((from.x() - x0) / cell)), 0, nx - 1);
  const int sj = std::clamp(static_cast<int>(std::lround(from.y() / cell)), 0, nz - 1);
  const int start = sj * nx + si;
  if (!free[static_cast<std::size_t>(start)]) return std::nullopt;

  const int goal_row = std::min(nz - 1, static_cast<int>(std::ceil(corridor.finish_z / cell - 1e-9)));
  std::vector<double> dist(free.size(), std::numeric_limits<double>::infinity());
  std::vector<int> parent(free.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[static_cast<std::size_t>(start)] = 0.0;
  open.push({0.0, start});
  int goal = -1;
  while (!open.empty()) {
    const auto [d, node] = open.top();
    open.pop();
    if (d > dist[static_cast<std::size_t>(node)]) continue;
    const int i = node % nx;
    const int j = node / nx;
    if (j >= goal_row) {
      goal = node;
      break;
    }
    for (int dj = -1; dj <= 1; ++dj) {
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        const int ni = i + di;
        const int nj = j + dj;
        if (ni < 0 || nj < 0 || ni >= nx || nj >= nz) continue;
        const int next = nj * nx + ni;
        if (!free[static_cast<std::size_t>(next)]) continue;
        if (di != 0 && dj != 0 &&
            (!free[static_cast<std::size_t>(j * nx + ni)] || !free[static_cast<std::size_t>(nj * nx + i)]))
          continue;
        const double nd = d + (di != 0 && dj != 0 ? std::numbers::sqrt2 : 1.0) * cell;
        if (nd < dist[static_cast<std::size_t>(next)]) {
          dist[static_cast<std::size_t>(next)] = nd;
          parent[static_cast<std::size_t>(next)] = node;
          open.push({nd, next});
        }
      }
    }
  }
  if (goal < 0) return std::nullopt;
  std::vector<Vec2> path;
  for (int n = goal; n >= 0; n = parent[static_cast<std::size_t>(n)]) path.push_back(world(n % nx, n / nx));
  std::reverse(path.begin(), path.end());
  return path;
}

std::string_view to_string(ObstacleVerdict verdict) {
  switch (verdict) {
    case ObstacleVerdict::Seen: return "seen";
    case ObstacleVerdict::Missed: return "missed";
    case ObstacleVerdict::Passed: return "passed";
  }
  return "?";
}

namespace {

struct TrackPoint {
  double t;
  Vec2 p;
};

// Earliest time at which the piecewise-linear track comes within radius of c.
std::optional<double> first_entry(const std::vector<TrackPoint>& track, const Vec2& c, double radius) {
  if (track.empty()) return std::nullopt;
  if ((track.front().p - c).norm() <= radius) return track.front().t;
  for (std::size_t k = 0; k + 1 < track.size(); ++k) {
    const Vec2 a = track[k].p;
    const Vec2 d = track[k + 1].p - a;
    const Vec2 f = a - c;
    const double qa = d.squaredNorm();
    if (qa == 0.0) continue;
    const double qb = 2.0 * f.dot(d);
    const double qc = f.squaredNorm() - radius * radius;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) continue;
    const double s = (-qb - std::sqrt(disc)) / (2.0 * qa);
    if (s >= 0.0 && s <= 1.0) return track[k].t + s * (track[k + 1].t - track[k].t);
    if (s < 0.0 && qc <= 0.0) return track[k].t;
  }
  return std::nullopt;
}

std::optional<Vec2> position_at(const std::vector<TrackPoint>& track, double t) {
  if (track.empty()) return std::nullopt;
  if (t <= track.front().t) return track.front().p;
  for (std::size_t k = 0; k + 1 < track.size(); ++k) {
    if (t <= track[k + 1].t) {
      const double span = track[k + 1].t - track[k].t;
      const double s = span > 0 ? (t - track[k].t) / span : 1.0;
      return Vec2(track[k].p + s * (track[k + 1].p - track[k].p));
    }
  }
  return track.back().p;
}

}  // namespace

NavigationResult judge_obstacles(const SessionLog& log, const NavigationTask& task, const JudgeConfig& config) {
  if (!log.has_complete_events()) throw DataError("incomplete navigation log");
  const double start = *log.start_time();
  const double end = *log.end_time();

  std::vector<TrackPoint> track;
  for (const auto& e : log.events) {
    if (e.t < start || e.t > end) continue;
    if (const auto* p = std::get_if<event::Pose>(&e.payload)) {
      const Vec2 xz(p->pose.position.x(), p->pose.position.z());
      if (!track.empty() && track.back().t == e.t) {
        track.back().p = xz;
      } else {
        track.push_back({e.t, xz});
      }
    }
  }

  NavigationResult result;
  result.course_time = end - start;
  for (const Obstacle& o : task.obstacles) {
    bool collided = false;
    std::optional<double> seen;
    for (const auto& e : log.events) {
      if (e.t < start || e.t > end) continue;
      if (const auto* c = std::get_if<event::Collision>(&e.payload); c && c->obstacle == o.index) collided = true;
      if (const auto* r = std::get_if<event::ObstacleReport>(&e.payload); r && !seen) {
        if ((Vec2(r->x, r->z) - o.position).norm() > config.report_tolerance) continue;
        const auto walker = position_at(track, e.t);
        if (walker && (*walker - o.position).norm() < config.min_report_distance) continue;
        seen = e.t;
      }
    }
    const auto entered = first_entry(track, o.position, config.collision_radius);
    ObstacleVerdict v = ObstacleVerdict::Passed;
    if (collided) {
      v = ObstacleVerdict::Missed;
    } else if (seen && (!entered || *seen <= *entered)) {
      v = ObstacleVerdict::Seen;
    } else if (entered) {
      v = ObstacleVerdict::Missed;
    }
    result.verdicts.push_back(v);
    if (v == ObstacleVerdict::Missed) ++result.missed_count;
  }
  return result;
}

}  // namespace echogrid
