#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vlagen {

using Vec3 = Eigen::Vector3d;
using TimestampMs = std::int64_t;

/// WGS84 ellipsoid.
namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEccSq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

struct Geodetic {
  double lat = 0.0;  // rad
  double lon = 0.0;  // rad
  double height = 0.0;  // m above the ellipsoid
};

/// Roll, pitch, yaw in radians. Body axes are forward-right-down and the
/// rotation from body to NED is Rz(yaw) * Ry(pitch) * Rx(roll).
struct NedOrientation {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

struct Pose {
  Vec3 position_ecef = Vec3::Zero();
  NedOrientation orientation_ned;
  Vec3 velocity_ecef = Vec3::Zero();
  TimestampMs timestamp = 0;
};

struct CameraModel {
  Eigen::Matrix3d intrinsic = Eigen::Matrix3d::Identity();
  /// Rigid transform from the ego frame to the camera frame.
  Eigen::Matrix4d extrinsic = Eigen::Matrix4d::Identity();

  /// The camera the example dataset frame was captured with.
  static CameraModel reference();
};

Geodetic ecef_to_geodetic(const Vec3& ecef);
Vec3 geodetic_to_ecef(const Geodetic& g);

/// Rotation taking ECEF vectors into the NED frame at `g`.
Eigen::Matrix3d ecef_to_ned_rotation(const Geodetic& g);

/// Local tangent plane (north, east, down) offsets of `p` from `origin`.
/// Throws DegenerateOrigin when the origin is not near the Earth's surface.
Vec3 ecef_to_ned(const Vec3& p, const Vec3& origin);
Vec3 ned_to_ecef(const Vec3& ned, const Vec3& origin);

double wrap_angle(double a);  // into (-pi, pi]

Eigen::Matrix3d body_to_ned_rotation(const NedOrientation& o);

/// ECEF points into the ego frame of `ego` (x forward, y left, z up).
std::vector<Vec3> world_to_ego(std::span<const Vec3> points, const Pose& ego);
Vec3 world_to_ego(const Vec3& point, const Pose& ego);
std::vector<Vec3> ego_to_world(std::span<const Vec3> points, const Pose& ego);
Vec3 ego_to_world(const Vec3& point, const Pose& ego);

/// Checks fx, fy > 0 and that the extrinsic rotation is orthonormal with
/// determinant 1 within `tol`.
bool is_valid(const CameraModel& cam, double tol = 1e-6);

inline constexpr double kMinProjectionDepth = 0.1;  // m

/// Pinhole projection; empty when the camera-frame depth is <= 0.1 m.
std::optional<Eigen::Vector2d> project_to_image(const Vec3& p_ego,
                                                const CameraModel& cam);

}  // namespace vlagen
