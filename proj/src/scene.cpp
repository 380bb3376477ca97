#include "echogrid/scene.hpp"

#include "json_fields.hpp"

#include <algorithm>
#include <set>

namespace echogrid {

using detail::json;

DetectionProfile localization_profile() { return {0.04, 2.0, 0.043, 70.0}; }

DetectionProfile navigation_profile() { return {0.14, 9.0, 0.173, 70.0}; }

void validate(const DetectionProfile& profile) {
  if (!(profile.min_range > 0 && profile.min_range < profile.max_range))
    throw std::invalid_argument("detection profile requires 0 < min_range < max_range");
  if (!(profile.marker_size > 0)) throw std::invalid_argument("marker size must be positive");
  if (!(profile.max_view_angle_deg > 0 && profile.max_view_angle_deg <= 90))
    throw std::invalid_argument("max view angle must lie in (0, 90] degrees");
}

const Marker* Scene::find_marker(int id) const {
  const auto it = std::find_if(markers.begin(), markers.end(), [id](const Marker& m) { return m.id == id; });
  return it == markers.end() ? nullptr : &*it;
}

double view_angle_deg(const Marker& marker, const Vec3& camera_position) {
  const Vec3 to_camera = camera_position - marker.center;
  const double n = to_camera.norm();
  if (n == 0.0) return 0.0;
  const double c = std::clamp(marker.normal.dot(to_camera) / n, -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

namespace {

// Segment p->q against a sphere; endpoints excluded so the camera or the
// marker touching a sphere does not count as occlusion by itself.
bool segment_hits_sphere(const Vec3& p, const Vec3& q, const Vec3& c, double r) {
  const Vec3 d = q - p;
  const double len2 = d.squaredNorm();
  if (len2 == 0.0) return false;
  const double s = std::clamp((c - p).dot(d) / len2, 0.0, 1.0);
  return (p + s * d - c).squaredNorm() < r * r;
}

}  // namespace

std::vector<Detection> detect_markers(const Scene& scene, const CameraPose& pose, const CameraIntrinsics& intr,
                                      const DetectionProfile& profile, const DetectOptions& options) {
  validate(profile);
  std::vector<Detection> out;
  for (const Marker& m : scene.markers) {
    const auto uv = project_point(pose, intr, m.center);
    if (!uv) continue;
    const double distance = (m.center - pose.position).norm();
    if (distance < profile.min_range || distance > profile.max_range) continue;
    if (view_angle_deg(m, pose.position) > profile.max_view_angle_deg) continue;
    if (options.occlusion) {
      const bool blocked = std::any_of(scene.colliders.begin(), scene.colliders.end(), [&](const Collider& c) {
        if ((m.center - c.center).norm() <= c.radius) return false;
        return segment_hits_sphere(pose.position, m.center, c.center, c.radius);
      });
      if (blocked) continue;
    }
    out.push_back({m.id, *uv, distance});
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.marker_id < b.marker_id; });
  return out;
}

void validate(const Scene& scene) {
  if (!(scene.bounds.min.array() < scene.bounds.max.array()).all())
    throw DataError("scene bounds must satisfy min < max on every axis");
  std::set<int> ids;
  for (const Marker& m : scene.markers) {
    if (!ids.insert(m.id).second) throw DataError("duplicate marker id " + std::to_string(m.id));
    if (!m.center.allFinite()) throw DataError("marker " + std::to_string(m.id) + " has a non-finite center");
    if (std::abs(m.normal.norm() - 1.0) > 1e-9)
      throw DataError("marker " + std::to_string(m.id) + " normal is not unit length");
    if (!(m.size > 0)) throw DataError("marker " + std::to_string(m.id) + " size must be positive");
    if (!scene.bounds.contains(m.center))
      throw DataError("marker " + std::to_string(m.id) + " lies outside the scene bounds");
  }
  for (const Collider& c : scene.colliders)
    if (!(c.radius > 0) || !c.center.allFinite()) throw DataError("collider radius must be positive");
}

Scene scene_from_json(const json& doc) {
  if (!doc.is_object()) throw DataError("scene document must be a JSON object");
  const std::string schema = detail::string_field(doc, "schema", "");
  if (schema != kSceneSchema) detail::field_error("schema", "unsupported schema '" + schema + "'");

  Scene scene;
  const json& bounds = detail::require(doc, "bounds", "");
  scene.bounds.min = detail::vec3_field(bounds, "min", "bounds");
  scene.bounds.max = detail::vec3_field(bounds, "max", "bounds");

  const json& markers = detail::require(doc, "markers", "");
  if (!markers.is_array()) detail::field_error("markers", "expected an array");
  std::set<int> ids;
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const std::string path = "markers[" + std::to_string(i) + "]";
    const json& jm = markers[i];
    Marker m;
    const json& id = detail::require(jm, "id", path);
    if (!id.is_number_integer()) detail::field_error(path + ".id", "expected an integer");
    m.id = id.get<int>();
    if (!ids.insert(m.id).second) throw DataError("duplicate marker id " + std::to_string(m.id) + " at " + path);
    m.center = detail::vec3_field(jm, "center", path);
    const Vec3 normal = detail::vec3_field(jm, "normal", path);
    if (normal.norm() < 1e-9) detail::field_error(path + ".normal", "must be non-zero");
    m.normal = normal.normalized();
    m.size = detail::number_field(jm, "size_m", path);
    if (!(m.size > 0)) detail::field_error(path + ".size_m", "must be positive");
    if (jm.contains("label")) m.label = detail::string_field(jm, "label", path);
    scene.markers.push_back(std::move(m));
  }

  if (doc.contains("colliders")) {
    const json& colliders = doc["colliders"];
    if (!colliders.is_array()) detail::field_error("colliders", "expected an array");
    for (std::size_t i = 0; i < colliders.size(); ++i) {
      const std::string path = "colliders[" + std::to_string(i) + "]";
      Collider c;
      c.center = detail::vec3_field(colliders[i], "center", path);
      c.radius = detail::number_field(colliders[i], "radius_m", path);
      if (!(c.radius > 0)) detail::field_error(path + ".radius_m", "must be positive");
      if (colliders[i].contains("label")) c.label = detail::string_field(colliders[i], "label", path);
      scene.colliders.push_back(std::move(c));
    }
  }

  if (doc.contains("meta")) {
    const json& meta = doc["meta"];
    if (meta.contains("task")) scene.meta.task = detail::string_field(meta, "task", "meta");
    if (meta.contains("seed")) {
      if (!meta["seed"].is_number_unsigned()) detail::field_error("meta.seed", "expected a non-negative integer");
      scene.meta.seed = meta["seed"].get<std::uint64_t>();
    }
  }

  for (const Marker& m : scene.markers)
    if (!scene.bounds.contains(m.center))
      throw DataError("marker " + std::to_string(m.id) + " lies outside the scene bounds");
  validate(scene);
  return scene;
}

Scene scene_from_config(std::string_view text) { return scene_from_json(detail::parse_document(text)); }

json scene_to_json(const Scene& scene) {
  json doc;
  doc["schema"] = kSceneSchema;
  doc["bounds"] = {{"min", detail::to_json(scene.bounds.min)}, {"max", detail::to_json(scene.bounds.max)}};
  json markers = json::array();
  for (const Marker& m : scene.markers) {
    json jm = {{"id", m.id},
               {"center", detail::to_json(m.center)},
               {"normal", detail::to_json(m.normal)},
               {"size_m", m.size}};
    if (!m.label.empty()) jm["label"] = m.label;
    markers.push_back(std::move(jm));
  }
  doc["markers"] = std::move(markers);
  json colliders = json::array();
  for (const Collider& c : scene.colliders) {
    json jc = {{"center", detail::to_json(c.center)}, {"radius_m", c.radius}};
    if (!c.label.empty()) jc["label"] = c.label;
    colliders.push_back(std::move(jc));
  }
  doc["colliders"] = std::move(colliders);
  if (!scene.meta.task.empty() || scene.meta.seed) {
    json meta = json::object();
    if (!scene.meta.task.empty()) meta["task"] = scene.meta.task;
    if (scene.meta.seed) meta["seed"] = *scene.meta.seed;
    doc["meta"] = std::move(meta);
  }
  return doc;
}

std::string scene_to_config(const Scene& scene) { return scene_to_json(scene).dump(2) + "\n"; }

}  // namespace echogrid
