#pragma once

// The two experimental tasks: three objects to find and point at on a table,
// and a corridor to cross past eight obstacles. Generators are pure functions
// of their seed.

#include "echogrid/scene.hpp"
#include "echogrid/session_log.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace echogrid {

// ---------------------------------------------------------------------------
// Localization

/// Table plane in world coordinates. The participant stands at the middle of
/// the near edge (z = 0); placement distances are measured from that point.
struct TableSpec {
  double width = 1.5;   // along x, centered on 0
  double depth = 0.8;   // along +z from the near edge
  double height = 0.75;
  double object_height = 0.03;  // marker plane above the table top
  double min_placement = 0.05;
  double max_placement = 1.0;
  double min_separation = 0.15;
  double edge_margin = 0.03;

  Vec3 participant_point() const { return {0.0, height, 0.0}; }
  double marker_height() const { return height + object_height; }
};

struct LocalizationObject {
  int id = 0;
  std::string label;
  Vec3 position;  // marker center
};

struct LocalizationTask {
  std::uint64_t seed = 0;
  TableSpec table;
  std::array<LocalizationObject, 3> objects;

  const LocalizationObject& object(int id) const;
  Scene scene() const;
};

LocalizationTask gen_localization(std::uint64_t seed);

/// Simulated pointing error: the ray from origin toward the submitted point is
/// deflected by two independent Gaussian angles before hitting the table.
struct PointingNoise {
  double sigma_deg = 3.0;
  Vec3 origin;
  std::mt19937_64* rng = nullptr;
};

/// Table-plane distance between the (possibly perturbed) submitted point and
/// the object. Throws std::invalid_argument for an unknown object id.
double score_pointing(const LocalizationTask& task, int object_id, const Vec2& submitted_xz,
                      const std::optional<PointingNoise>& noise = std::nullopt);

/// Applies the pointing noise model and returns where the finger lands.
Vec2 perturb_pointing(const Vec2& intended_xz, double plane_height, const PointingNoise& noise);

struct ObjectScore {
  int object_id = 0;
  double time_to_find = 0.0;
  double error_distance = 0.0;
};

struct LocalizationResult {
  std::vector<ObjectScore> objects;  // in submission order
  double total_time = 0.0;
};

/// Each submission is attributed to the nearest object not found yet.
/// Throws DataError on an incomplete log.
LocalizationResult judge_localization(const SessionLog& log, const LocalizationTask& task);

// ---------------------------------------------------------------------------
// Navigation

struct CorridorSpec {
  double length = 15.0;  // z in [0, length]
  double width = 6.0;    // x in [-width/2, width/2]
  double start_z = 0.5;
  double finish_z = 14.5;
  double min_obstacle_z = 2.5;
  double max_obstacle_z = 12.5;
  double wall_margin = 1.0;
  double min_separation = 1.0;
  double marker_height = 0.4;
  double marker_size = 0.173;
  double path_clearance = 0.5;
};

struct Obstacle {
  int index = 0;
  std::string label;
  Vec2 position;  // (x, z) center on the floor
  double radius = 0.25;
  int front_marker = 0;  // faces the start line
  int back_marker = 0;   // faces the finish line
};

struct NavigationTask {
  std::uint64_t seed = 0;
  CorridorSpec corridor;
  std::vector<Obstacle> obstacles;

  Scene scene() const;
};

/// Layout seed of navigation course 1..3 within a session seeded with `base`;
/// always below 2^53.
std::uint64_t course_seed(std::uint64_t base, int course);

/// Throws DataError if no layout with a clear path is found within the retry
/// budget (the message names the seed).
NavigationTask gen_navigation(std::uint64_t seed);

struct Circle {
  Vec2 center;
  double radius = 0.0;
};

/// Grid path-finder over the corridor floor (0.1 m cells, 8-connected).
/// Every returned waypoint keeps at least `clearance` from walls and circle
/// boundaries. Returns nothing if the finish line is unreachable.
std::optional<std::vector<Vec2>> find_path(const CorridorSpec& corridor, const std::vector<Circle>& obstacles,
                                           const Vec2& from, double clearance, double cell = 0.1);

enum class ObstacleVerdict { Seen, Missed, Passed };

std::string_view to_string(ObstacleVerdict verdict);

struct NavigationResult {
  double course_time = 0.0;
  std::vector<ObstacleVerdict> verdicts;  // per obstacle index
  int missed_count = 0;
};

struct JudgeConfig {
  double collision_radius = 0.4;
  double report_tolerance = 0.5;
  double min_report_distance = 0.5;
};

/// Seen: an obstacle_report lands within report_tolerance of the obstacle while
/// the walker is at least min_report_distance away, before any close approach.
/// Missed: the pose track (as a polyline) enters collision_radius of an obstacle
/// not yet seen, or a collision event names it. Passed: neither.
/// Throws DataError on an incomplete log.
NavigationResult judge_obstacles(const SessionLog& log, const NavigationTask& task, const JudgeConfig& config = {});

}  // namespace echogrid
