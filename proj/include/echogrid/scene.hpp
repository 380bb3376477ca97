#pragma once

// World description and simulated fiducial-marker detection.

#include "echogrid/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace echogrid {

struct Marker {
  int id = 0;
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();  // unit length
  double size = 0.043;          // square side, meters
  std::string label;
};

struct Collider {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  std::string label;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Detector capabilities for one marker family.
struct DetectionProfile {
  double min_range = 0.04;
  double max_range = 2.0;
  double marker_size = 0.043;
  double max_view_angle_deg = 70.0;
};

/// 4.3 cm markers seen between 4 and 200 cm.
DetectionProfile localization_profile();
/// 17.3 cm markers seen between 14 and 900 cm.
DetectionProfile navigation_profile();

void validate(const DetectionProfile& profile);

struct Detection {
  int marker_id = 0;
  Vec2 image_point = Vec2::Zero();
  double distance = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Optional provenance carried through scene files so a rendered log can be
/// checked against the scene it was recorded in.
struct SceneMeta {
  std::string task;
  std::optional<std::uint64_t> seed;
};

struct Scene {
  std::vector<Marker> markers;
  Aabb bounds;
  std::vector<Collider> colliders;
  SceneMeta meta;

  const Marker* find_marker(int id) const;
};

struct DetectOptions {
  /// Treat colliders as opaque spheres. A collider that contains the marker
  /// center (the object the marker is pasted on) never occludes it.
  bool occlusion = false;
};

/// One detection per visible marker, sorted by marker id.
std::vector<Detection> detect_markers(const Scene& scene, const CameraPose& pose, const CameraIntrinsics& intr,
                                      const DetectionProfile& profile, const DetectOptions& options = {});

/// Angle in degrees between the marker normal and the direction from the
/// marker to the camera.
double view_angle_deg(const Marker& marker, const Vec3& camera_position);

inline constexpr std::string_view kSceneSchema = "echogrid-scene/1";

/// Parses and validates a scene document. Throws DataError with a line or
/// field path on malformed input, duplicate ids, or markers outside bounds.
Scene scene_from_config(std::string_view text);
Scene scene_from_json(const nlohmann::json& doc);
nlohmann::json scene_to_json(const Scene& scene);
std::string scene_to_config(const Scene& scene);

/// Validates the cross-field invariants of an in-memory scene.
void validate(const Scene& scene);

}  // namespace echogrid
