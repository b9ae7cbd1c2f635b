#include "vlagen/geodesy.hpp"

#include <cmath>
#include <numbers>

#include "vlagen/errors.hpp"

namespace vlagen {

namespace {

constexpr double kMinOriginRadius = 1e6;

// Forward-left-up ego axes from forward-right-down body axes (and back).
const Eigen::Matrix3d kFrdToFlu = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();

}  // namespace

CameraModel CameraModel::reference() {
  CameraModel cam;
  cam.intrinsic << 2648.0, 0.0, 964.0,  //
      0.0, 2648.0, 604.0,               //
      0.0, 0.0, 1.0;
  cam.extrinsic << -0.015688330416257182, -0.9998769191404183,
      0.00012959444326649344, 0.0,  //
      -0.008260370686184616, 2.879912020664621e-21, -0.9999658837914467,
      1.2200000286102295,  //
      0.9998428078989188, -0.01568886620613436, -0.008259354077745229,
      0.0,  //
      0.0, 0.0, 0.0, 1.0;
  return cam;
}

Vec3 geodetic_to_ecef(const Geodetic& g) {
  const double sin_lat = std::sin(g.lat);
  const double cos_lat = std::cos(g.lat);
  const double n =
      wgs84::kSemiMajor / std::sqrt(1.0 - wgs84::kEccSq * sin_lat * sin_lat);
  return {(n + g.height) * cos_lat * std::cos(g.lon),
          (n + g.height) * cos_lat * std::sin(g.lon),
          (n * (1.0 - wgs84::kEccSq) + g.height) * sin_lat};
}

Geodetic ecef_to_geodetic(const Vec3& ecef) {
  // Bowring's initial guess refined by fixed-point iteration; converges to
  // sub-nanometre height error in a handful of steps near the surface.
  const double a = wgs84::kSemiMajor;
  const double e2 = wgs84::kEccSq;
  const double b = a * (1.0 - wgs84::kFlattening);
  const double ep2 = (a * a - b * b) / (b * b);
  const double p = std::hypot(ecef.x(), ecef.y());

  Geodetic g;
  g.lon = std::atan2(ecef.y(), ecef.x());
  const double theta = std::atan2(ecef.z() * a, p * b);
  const double st = std::sin(theta);
  const double ct = std::cos(theta);
  double lat = std::atan2(ecef.z() + ep2 * b * st * st * st,
                          p - e2 * a * ct * ct * ct);
  double h = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double sl = std::sin(lat);
    const double n = a / std::sqrt(1.0 - e2 * sl * sl);
    h = std::abs(std::cos(lat)) > 1e-10 ? p / std::cos(lat) - n
                                         : std::abs(ecef.z()) - b;
    lat = std::atan2(ecef.z(), p * (1.0 - e2 * n / (n + h)));
  }
  g.lat = lat;
  g.height = h;
  return g;
}

Eigen::Matrix3d ecef_to_ned_rotation(const Geodetic& g) {
  const double sl = std::sin(g.lat);
  const double cl = std::cos(g.lat);
  const double so = std::sin(g.lon);
  const double co = std::cos(g.lon);
  Eigen::Matrix3d r;
  r << -sl * co, -sl * so, cl,  //
      -so, co, 0.0,             //
      -cl * co, -cl * so, -sl;
  return r;
}

namespace {

Eigen::Matrix3d origin_rotation(const Vec3& origin) {
  if (!origin.allFinite() || origin.norm() < kMinOriginRadius) {
    throw DegenerateOrigin("NED origin is not near the Earth's surface");
  }
  return ecef_to_ned_rotation(ecef_to_geodetic(origin));
}

}  // namespace

Vec3 ecef_to_ned(const Vec3& p, const Vec3& origin) {
  return origin_rotation(origin) * (p - origin);
}

Vec3 ned_to_ecef(const Vec3& ned, const Vec3& origin) {
  return origin + origin_rotation(origin).transpose() * ned;
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

Eigen::Matrix3d body_to_ned_rotation(const NedOrientation& o) {
  return (Eigen::AngleAxisd(o.yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(o.pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(o.roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

namespace {

// Rotation taking ECEF vectors into the ego (forward-left-up) frame.
Eigen::Matrix3d ecef_to_ego_rotation(const Pose& ego) {
  const Eigen::Matrix3d ecef_to_ned = origin_rotation(ego.position_ecef);
  return kFrdToFlu * body_to_ned_rotation(ego.orientation_ned).transpose() *
         ecef_to_ned;
}

}  // namespace

Vec3 world_to_ego(const Vec3& point, const Pose& ego) {
  return ecef_to_ego_rotation(ego) * (point - ego.position_ecef);
}

std::vector<Vec3> world_to_ego(std::span<const Vec3> points, const Pose& ego) {
  const Eigen::Matrix3d r = ecef_to_ego_rotation(ego);
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.emplace_back(r * (p - ego.position_ecef));
  return out;
}

Vec3 ego_to_world(const Vec3& point, const Pose& ego) {
  return ego.position_ecef + ecef_to_ego_rotation(ego).transpose() * point;
}

std::vector<Vec3> ego_to_world(std::span<const Vec3> points, const Pose& ego) {
  const Eigen::Matrix3d rt = ecef_to_ego_rotation(ego).transpose();
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.emplace_back(ego.position_ecef + rt * p);
  return out;
}

bool is_valid(const CameraModel& cam, double tol) {
  if (!cam.intrinsic.allFinite() || !cam.extrinsic.allFinite()) return false;
  if (cam.intrinsic(0, 0) <= 0.0 || cam.intrinsic(1, 1) <= 0.0) return false;
  const Eigen::Matrix3d r = cam.extrinsic.topLeftCorner<3, 3>();
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  return (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <=
         tol;
}

std::optional<Eigen::Vector2d> project_to_image(const Vec3& p_ego,
                                                const CameraModel& cam) {
  const Vec3 p_cam = cam.extrinsic.topLeftCorner<3, 3>() * p_ego +
                     cam.extrinsic.topRightCorner<3, 1>();
  if (!(p_cam.z() > kMinProjectionDepth)) return std::nullopt;
  const Vec3 uvw = cam.intrinsic * p_cam;
  return Eigen::Vector2d(uvw.x() / uvw.z(), uvw.y() / uvw.z());
}

}  // namespace vlagen
