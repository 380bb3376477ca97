#include "echogrid/error.hpp"
#include "echogrid/scene.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace echogrid;
using doctest::Approx;

namespace {

Scene single_marker(const Vec3& center, const Vec3& normal, double size = 0.043) {
  Scene s;
  s.bounds = {Vec3(-20, -20, -20), Vec3(20, 20, 20)};
  s.markers.push_back({1, center, normal.normalized(), size, "m"});
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Per-marker visibility from angles alone: horizontal and vertical offsets
/// of the camera-frame direction against the half fields of view.
bool brute_force_visible(const Marker& m, const Vec3& cam, double yaw_deg, double pitch_deg,
                         const CameraIntrinsics& intr, const DetectionProfile& p) {
  const Eigen::Matrix3d to_world = (Eigen::AngleAxisd(deg_to_rad(yaw_deg), Vec3::UnitY()) *
                                    Eigen::AngleAxisd(-deg_to_rad(pitch_deg), Vec3::UnitX()))
                                       .toRotationMatrix();
  const Vec3 d = to_world.transpose() * (m.center - cam);  // x right, y up, z forward
  if (d.z() <= 0) return false;
  const double h = rad_to_deg(std::atan2(std::abs(d.x()), d.z()));
  const double v = rad_to_deg(std::atan2(std::abs(d.y()), d.z()));
  if (h > intr.h_fov_deg / 2 || v > intr.v_fov_deg / 2) return false;
  const double dist = (m.center - cam).norm();
  if (dist < p.min_range || dist > p.max_range) return false;
  const double cosang = m.normal.dot((cam - m.center).normalized());
  return rad_to_deg(std::acos(std::clamp(cosang, -1.0, 1.0))) <= p.max_view_angle_deg;
}

}  // namespace

TEST_SUITE("camera") {
  TEST_CASE("a point on the optical axis lands in the image center") {
    const CameraPose pose = make_pose(Vec3(0, 1, 0), 0.0, 0.0);
    const auto uv = project_point(pose, CameraIntrinsics{}, Vec3(0, 1, 3));
    REQUIRE(uv);
    CHECK(uv->x() == Approx(0.5));
    CHECK(uv->y() == Approx(0.5));
  }

  TEST_CASE("image axes: u grows right, v grows down") {
    const CameraPose pose = make_pose(Vec3(0, 0, 0), 0.0, 0.0);
    const auto right = project_point(pose, CameraIntrinsics{}, Vec3(0.2, 0, 1));
    const auto up = project_point(pose, CameraIntrinsics{}, Vec3(0, 0.2, 1));
    REQUIRE(right);
    REQUIRE(up);
    CHECK(right->x() > 0.5);
    CHECK(up->y() < 0.5);
  }

  TEST_CASE("looking straight down: image up is +z and image right is +x") {
    const CameraPose pose = make_pose(Vec3(0, 1, 0), 0.0, -90.0);
    const auto ahead = project_point(pose, CameraIntrinsics{}, Vec3(0, 0, 0.2));
    const auto right = project_point(pose, CameraIntrinsics{}, Vec3(0.2, 0, 0));
    REQUIRE(ahead);
    REQUIRE(right);
    CHECK(ahead->y() < 0.5);
    CHECK(ahead->x() == Approx(0.5));
    CHECK(right->x() > 0.5);
  }

  TEST_CASE("points behind the camera or outside the field of view do not project") {
    const CameraPose pose = make_pose(Vec3(0, 0, 0), 0.0, 0.0);
    CHECK_FALSE(project_point(pose, CameraIntrinsics{}, Vec3(0, 0, -1)));
    CHECK_FALSE(project_point(pose, CameraIntrinsics{}, Vec3(1, 0, 1)));  // 45 deg > 30 deg half angle
    CHECK(project_point(pose, CameraIntrinsics{}, Vec3(0.5, 0, 1)));      // 26.6 deg
  }

  TEST_CASE("image_ray inverts project_point") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> yaw(-180, 180), pitch(-89, 89), u(0.01, 0.99), s(0.5, 5);
    for (int i = 0; i < 2000; ++i) {
      const CameraPose pose = make_pose(Vec3(0.3, 1.1, -0.4), yaw(rng), pitch(rng));
      const Vec2 uv(u(rng), u(rng));
      const Vec3 p = pose.position + s(rng) * image_ray(pose, CameraIntrinsics{}, uv);
      const auto back = project_point(pose, CameraIntrinsics{}, p);
      REQUIRE(back);
      CHECK(back->x() == Approx(uv.x()).epsilon(1e-9));
      CHECK(back->y() == Approx(uv.y()).epsilon(1e-9));
    }
  }

  TEST_CASE("pose construction") {
    CHECK(make_pose(Vec3(0, 0, 0), 190.0, 0.0).yaw_deg == Approx(-170));
    CHECK(make_pose(Vec3(0, 0, 0), -180.0, 0.0).yaw_deg == Approx(180));
    CHECK_THROWS_AS(make_pose(Vec3(0, 0, 0), 0.0, 91.0), std::invalid_argument);
    CHECK_THROWS_AS(make_pose(Vec3(NAN, 0, 0), 0.0, 0.0), std::invalid_argument);
  }
}

TEST_SUITE("detection") {
  TEST_CASE("range gating under the localization profile") {
    const DetectionProfile p = localization_profile();
    auto seen_at = [&](double d) {
      const Scene s = single_marker(Vec3(0, 0, d), Vec3(0, 0, -1));
      return !detect_markers(s, make_pose(Vec3(0, 0, 0), 0.0, 0.0), CameraIntrinsics{}, p).empty();
    };
    CHECK_FALSE(seen_at(0.039));
    CHECK(seen_at(0.041));
    CHECK(seen_at(1.999));
    CHECK_FALSE(seen_at(2.001));
  }

  TEST_CASE("range gating under the navigation profile") {
    const DetectionProfile p = navigation_profile();
    auto seen_at = [&](double d) {
      const Scene s = single_marker(Vec3(0, 0, d), Vec3(0, 0, -1), p.marker_size);
      return !detect_markers(s, make_pose(Vec3(0, 0, 0), 0.0, 0.0), CameraIntrinsics{}, p).empty();
    };
    CHECK_FALSE(seen_at(0.139));
    CHECK(seen_at(0.141));
    CHECK(seen_at(8.999));
    CHECK_FALSE(seen_at(9.001));
  }

  TEST_CASE("profiles") {
    CHECK(localization_profile().min_range == 0.04);
    CHECK(localization_profile().max_range == 2.0);
    CHECK(localization_profile().marker_size == 0.043);
    CHECK(navigation_profile().min_range == 0.14);
    CHECK(navigation_profile().max_range == 9.0);
    CHECK(navigation_profile().marker_size == 0.173);
    DetectionProfile bad = localization_profile();
    bad.min_range = 3.0;
    CHECK_THROWS(validate(bad));
  }

  TEST_CASE("markers seen too obliquely are dropped") {
    const DetectionProfile p = localization_profile();
    auto seen_with_tilt = [&](double deg) {
      const double r = deg_to_rad(deg);
      const Scene s = single_marker(Vec3(0, 0, 1), Vec3(std::sin(r), 0, -std::cos(r)));
      return !detect_markers(s, make_pose(Vec3(0, 0, 0), 0.0, 0.0), CameraIntrinsics{}, p).empty();
    };
    CHECK(seen_with_tilt(0));
    CHECK(seen_with_tilt(69));
    CHECK_FALSE(seen_with_tilt(71));
    CHECK_FALSE(seen_with_tilt(180));  // the back of the marker
  }

  TEST_CASE("detections carry image point and distance, sorted by id") {
    Scene s = single_marker(Vec3(0.1, 0, 1), Vec3(0, 0, -1));
    s.markers.insert(s.markers.begin(), Marker{7, Vec3(-0.1, 0, 1.5), Vec3(0, 0, -1), 0.043, "b"});
    const auto d = detect_markers(s, make_pose(Vec3(0, 0, 0), 0.0, 0.0), CameraIntrinsics{}, localization_profile());
    REQUIRE(d.size() == 2);
    CHECK(d[0].marker_id == 1);
    CHECK(d[1].marker_id == 7);
    CHECK(d[0].distance == Approx(std::hypot(0.1, 1.0)));
    CHECK(d[0].image_point.x() > 0.5);
    CHECK(d[1].image_point.x() < 0.5);
  }

  TEST_CASE("occlusion by colliders is optional and ignores the marker's own object") {
    Scene s = single_marker(Vec3(0, 0, 3), Vec3(0, 0, -1), 0.173);
    s.colliders.push_back({Vec3(0, 0, 1.5), 0.3, "box"});
    s.colliders.push_back({Vec3(0, 0, 3.2), 0.3, "own"});
    const CameraPose pose = make_pose(Vec3(0, 0, 0), 0.0, 0.0);
    CHECK(detect_markers(s, pose, CameraIntrinsics{}, navigation_profile()).size() == 1);
    CHECK(detect_markers(s, pose, CameraIntrinsics{}, navigation_profile(), {true}).empty());
    s.colliders.erase(s.colliders.begin());
    CHECK(detect_markers(s, pose, CameraIntrinsics{}, navigation_profile(), {true}).size() == 1);
  }

  TEST_CASE("corridor template from the entrance matches a per-marker brute-force check") {
    const Scene s = scene_from_config(read_file(std::string(ECHOGRID_DATA_DIR) + "/corridor.json"));
    const DetectionProfile p = navigation_profile();
    const CameraIntrinsics intr;
    const CameraPose entrance = make_pose(Vec3(0, 1.2, 0.0), 0.0, -5.0);
    const auto got = detect_markers(s, entrance, intr, p);
    std::set<int> expected;
    for (const Marker& m : s.markers)
      if (brute_force_visible(m, entrance.position, entrance.yaw_deg, entrance.pitch_deg, intr, p)) expected.insert(m.id);
    std::set<int> ids;
    for (const Detection& d : got) ids.insert(d.marker_id);
    CHECK(ids == expected);
    CHECK_FALSE(ids.empty());
    for (const Detection& d : got) CHECK(d.distance <= 9.0);
  }

  TEST_CASE("random poses agree with the brute-force check") {
    const Scene s = scene_from_config(read_file(std::string(ECHOGRID_DATA_DIR) + "/corridor.json"));
    const DetectionProfile p = navigation_profile();
    const CameraIntrinsics intr;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> x(-2.5, 2.5), z(0, 14), yaw(-60, 60), pitch(-40, 10);
    int agree = 0;
    for (int i = 0; i < 3000; ++i) {
      const CameraPose pose = make_pose(Vec3(x(rng), 1.2, z(rng)), yaw(rng), pitch(rng));
      std::set<int> a, b;
      for (const Detection& d : detect_markers(s, pose, intr, p)) a.insert(d.marker_id);
      for (const Marker& m : s.markers)
        if (brute_force_visible(m, pose.position, pose.yaw_deg, pose.pitch_deg, intr, p)) b.insert(m.id);
      agree += a == b;
    }
    CHECK(agree == 3000);
  }
}

TEST_SUITE("scene files") {
  TEST_CASE("bundled corridor template") {
    const Scene s = scene_from_config(read_file(std::string(ECHOGRID_DATA_DIR) + "/corridor.json"));
    CHECK(s.markers.size() == 8);
    CHECK(s.bounds.max.x() - s.bounds.min.x() == Approx(6.0));
    CHECK(s.bounds.max.z() - s.bounds.min.z() == Approx(15.0));
    std::multiset<std::string> labels;
    for (const Marker& m : s.markers) labels.insert(m.label);
    CHECK(labels.count("chair") == 2);
    CHECK(labels.count("garbage bin") == 2);
    CHECK(labels.count("bag") == 2);
    CHECK(labels.count("cardboard box") == 2);
  }

  TEST_CASE("config round trip") {
    Scene s = single_marker(Vec3(0.25, 0.78, 0.5), Vec3(0, 1, 0));
    s.colliders.push_back({Vec3(1, 0.4, 3), 0.25, "bag"});
    s.meta = {"localization", 42};
    const Scene back = scene_from_config(scene_to_config(s));
    REQUIRE(back.markers.size() == 1);
    CHECK(back.markers[0].center == s.markers[0].center);
    CHECK(back.markers[0].normal == s.markers[0].normal);
    CHECK(back.markers[0].label == "m");
    CHECK(back.colliders.size() == 1);
    CHECK(back.meta.seed == std::optional<std::uint64_t>(42));
    CHECK(scene_to_config(back) == scene_to_config(s));
  }

  TEST_CASE("normals are normalized on load") {
    Scene s = single_marker(Vec3(0, 0, 1), Vec3(0, 0, -1));
    auto doc = scene_to_json(s);
    doc["markers"][0]["normal"] = {0, 0, -3};
    CHECK(scene_from_json(doc).markers[0].normal == Vec3(0, 0, -1));
  }

  TEST_CASE("malformed documents name the problem") {
    const Scene s = single_marker(Vec3(0, 0, 1), Vec3(0, 0, -1));
    auto doc = scene_to_json(s);
    auto dup = doc;
    dup["markers"].push_back(dup["markers"][0]);
    CHECK_THROWS_WITH_AS(scene_from_json(dup), doctest::Contains("duplicate"), DataError);
    auto outside = doc;
    outside["markers"][0]["center"] = {0, 0, 100};
    CHECK_THROWS_WITH_AS(scene_from_json(outside), doctest::Contains("outside"), DataError);
    auto schema = doc;
    schema["schema"] = "other/9";
    CHECK_THROWS_AS(scene_from_json(schema), DataError);
    auto size = doc;
    size["markers"][0]["size_m"] = "big";
    CHECK_THROWS_AS(scene_from_json(size), DataError);
    CHECK_THROWS_AS(scene_from_config("{ not json"), DataError);
  }
}
