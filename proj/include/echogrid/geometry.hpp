#pragma once

// Pinhole camera geometry shared by the detector, the encoder and the agents.
//
// World frame: x right, y up, z forward along the table/corridor axis.
// Camera frame: x right, y up, z along the optical axis. Image coordinates
// are normalized to [0,1]^2 with u growing rightward and v growing downward.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace echogrid {

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vec2T = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Mat3T = Eigen::Matrix<Scalar, 3, 3>;

using Vec3 = Vec3T<double>;
using Vec2 = Vec2T<double>;
using Mat3 = Mat3T<double>;

template <typename Scalar>
constexpr Scalar deg_to_rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
constexpr Scalar rad_to_deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Wraps an angle in degrees into (-180, 180].
template <typename Scalar>
Scalar normalize_yaw(Scalar deg) {
  Scalar r = std::fmod(deg, Scalar(360));
  if (r <= Scalar(-180)) r += Scalar(360);
  if (r > Scalar(180)) r -= Scalar(360);
  return r;
}

/// Handheld device pose. Positive yaw turns right (toward +x), positive pitch
/// looks up. Roll is always zero.
template <typename Scalar>
struct CameraPoseT {
  Vec3T<Scalar> position = Vec3T<Scalar>::Zero();
  Scalar yaw_deg = 0;
  Scalar pitch_deg = 0;
};

template <typename Scalar>
struct CameraIntrinsicsT {
  Scalar h_fov_deg = 60;
  Scalar v_fov_deg = 45;
};

using CameraPose = CameraPoseT<double>;
using CameraIntrinsics = CameraIntrinsicsT<double>;

/// Builds a pose with yaw normalized and pitch range-checked.
template <typename Scalar>
CameraPoseT<Scalar> make_pose(const Vec3T<Scalar>& position, Scalar yaw_deg, Scalar pitch_deg) {
  if (!position.allFinite() || !std::isfinite(yaw_deg) || !std::isfinite(pitch_deg))
    throw std::invalid_argument("camera pose must be finite");
  if (pitch_deg < Scalar(-90) || pitch_deg > Scalar(90))
    throw std::invalid_argument("camera pitch must lie in [-90, 90] degrees");
  return {position, normalize_yaw(yaw_deg), pitch_deg};
}

template <typename Scalar>
void validate(const CameraIntrinsicsT<Scalar>& intr) {
  if (!(intr.h_fov_deg > 0 && intr.h_fov_deg < 180) || !(intr.v_fov_deg > 0 && intr.v_fov_deg < 180))
    throw std::invalid_argument("field of view must lie in (0, 180) degrees");
}

/// World-to-camera rotation; its rows are the camera right, up and forward
/// axes expressed in world coordinates.
template <typename Scalar>
Mat3T<Scalar> world_to_camera(const CameraPoseT<Scalar>& pose) {
  using std::cos;
  using std::sin;
  const Scalar yaw = deg_to_rad(pose.yaw_deg);
  const Scalar pitch = deg_to_rad(pose.pitch_deg);
  const Vec3T<Scalar> forward(sin(yaw) * cos(pitch), sin(pitch), cos(yaw) * cos(pitch));
  const Vec3T<Scalar> right(cos(yaw), Scalar(0), -sin(yaw));
  const Vec3T<Scalar> up = forward.cross(right);
  Mat3T<Scalar> r;
  r.row(0) = right.transpose();
  r.row(1) = up.transpose();
  r.row(2) = forward.transpose();
  return r;
}

template <typename Scalar>
Vec3T<Scalar> forward_axis(const CameraPoseT<Scalar>& pose) {
  return world_to_camera(pose).row(2).transpose();
}

template <typename Scalar>
Vec3T<Scalar> to_camera(const CameraPoseT<Scalar>& pose, const Vec3T<Scalar>& p) {
  return world_to_camera(pose) * (p - pose.position);
}

/// Projects a world point to normalized image coordinates. Returns nothing for
/// points behind the camera or outside either field-of-view half-angle.
template <typename Scalar>
std::optional<Vec2T<Scalar>> project_point(const CameraPoseT<Scalar>& pose,
                                           const CameraIntrinsicsT<Scalar>& intr,
                                           const Vec3T<Scalar>& p) {
  const Vec3T<Scalar> c = to_camera(pose, p);
  if (!(c.z() > Scalar(0))) return std::nullopt;
  const Scalar tx = std::tan(deg_to_rad(intr.h_fov_deg) / Scalar(2));
  const Scalar ty = std::tan(deg_to_rad(intr.v_fov_deg) / Scalar(2));
  const Scalar nx = c.x() / c.z() / tx;
  const Scalar ny = c.y() / c.z() / ty;
  if (std::abs(nx) > Scalar(1) || std::abs(ny) > Scalar(1)) return std::nullopt;
  return Vec2T<Scalar>(Scalar(0.5) + Scalar(0.5) * nx, Scalar(0.5) - Scalar(0.5) * ny);
}

/// Inverse of project_point: unit world-space ray through image point (u, v).
template <typename Scalar>
Vec3T<Scalar> image_ray(const CameraPoseT<Scalar>& pose, const CameraIntrinsicsT<Scalar>& intr,
                        const Vec2T<Scalar>& uv) {
  const Scalar tx = std::tan(deg_to_rad(intr.h_fov_deg) / Scalar(2));
  const Scalar ty = std::tan(deg_to_rad(intr.v_fov_deg) / Scalar(2));
  const Vec3T<Scalar> cam((Scalar(2) * uv.x() - Scalar(1)) * tx, (Scalar(1) - Scalar(2) * uv.y()) * ty,
                          Scalar(1));
  return (world_to_camera(pose).transpose() * cam).normalized();
}

/// Intersection of a ray with the horizontal plane y = height, if it hits it
/// in front of the origin.
template <typename Scalar>
std::optional<Vec3T<Scalar>> intersect_horizontal(const Vec3T<Scalar>& origin, const Vec3T<Scalar>& dir,
                                                  Scalar height) {
  if (std::abs(dir.y()) < Scalar(1e-12)) return std::nullopt;
  const Scalar s = (height - origin.y()) / dir.y();
  if (s <= Scalar(0)) return std::nullopt;
  return Vec3T<Scalar>(origin + s * dir);
}

}  // namespace echogrid
