#include "vlagen/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "vlagen/errors.hpp"

namespace vlagen {

namespace {

constexpr double kInitWindowMs = 1000.0;
constexpr double kMinHeadingDisplacement = 1.0;  // m

void symmetrize(StateCov& p) { p = 0.5 * (p + p.transpose()); }

}  // namespace

void NoiseConfig::validate() const {
  if (!(gnss_sigma > 0.0) || !(accel_sigma > 0.0) || !(gyro_sigma > 0.0) ||
      !(initial_pos_sigma > 0.0)) {
    throw ConfigError("noise sigmas must all be positive");
  }
}

FilterState predict(const FilterState& state, const ImuSample& imu, double dt,
                    const NoiseConfig& cfg) {
  if (!(dt > 0.0) || dt > kMaxPredictDt) {
    throw InvalidDt("prediction step must satisfy 0 < dt <= 0.25 s, got " +
                    std::to_string(dt));
  }
  const Eigen::Matrix3d ned_to_ecef =
      ecef_to_ned_rotation(ecef_to_geodetic(state.position_ecef)).transpose();

  // Device axes are forward-left-up; the level body frame is forward-right-down.
  const double fx = imu.accel_device.x();
  const double fy = -imu.accel_device.y();
  const double fz = -imu.accel_device.z();
  const double c = std::cos(state.yaw_ned);
  const double s = std::sin(state.yaw_ned);
  const Vec3 accel_ned(c * fx - s * fy, s * fx + c * fy, fz);
  const Vec3 daccel_dyaw_ned(-s * fx - c * fy, c * fx - s * fy, 0.0);
  const Vec3 accel = ned_to_ecef * accel_ned;
  const Vec3 daccel_dyaw = ned_to_ecef * daccel_dyaw_ned;

  FilterState out = state;
  out.position_ecef = state.position_ecef + state.velocity_ecef * dt + 0.5 * accel * dt * dt;
  out.velocity_ecef = state.velocity_ecef + accel * dt;
  out.yaw_ned = wrap_angle(state.yaw_ned - imu.gyro_device.z() * dt);

  StateCov f = StateCov::Identity();
  f.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity() * dt;
  f.block<3, 1>(0, 6) = 0.5 * dt * dt * daccel_dyaw;
  f.block<3, 1>(3, 6) = dt * daccel_dyaw;

  StateCov q = StateCov::Zero();
  const double qa = cfg.accel_sigma * cfg.accel_sigma;
  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  q.block<3, 3>(0, 0) = qa * 0.25 * std::pow(dt, 4) * eye;
  q.block<3, 3>(0, 3) = qa * 0.5 * std::pow(dt, 3) * eye;
  q.block<3, 3>(3, 0) = qa * 0.5 * std::pow(dt, 3) * eye;
  q.block<3, 3>(3, 3) = qa * dt * dt * eye;
  q(6, 6) = cfg.gyro_sigma * cfg.gyro_sigma * dt * dt;

  out.covariance = f * state.covariance * f.transpose() + q;
  symmetrize(out.covariance);
  out.timestamp = state.timestamp + static_cast<TimestampMs>(std::llround(dt * 1000.0));
  return out;
}

FilterState update_gnss(const FilterState& state, const GnssFix& fix,
                        const NoiseConfig& cfg) {
  if (!fix.fix_valid) throw InvalidFix("GNSS fix is flagged invalid");

  Eigen::Matrix<double, 3, kStateDim> h = Eigen::Matrix<double, 3, kStateDim>::Zero();
  h.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d r =
      Eigen::Matrix3d::Identity() * cfg.gnss_sigma * cfg.gnss_sigma;

  const Vec3 innovation = fix.position_ecef - state.position_ecef;
  const Eigen::Matrix3d s = h * state.covariance * h.transpose() + r;
  const Eigen::Matrix<double, kStateDim, 3> k =
      state.covariance * h.transpose() * s.ldlt().solve(Eigen::Matrix3d::Identity());
  const Eigen::Matrix<double, kStateDim, 1> dx = k * innovation;

  FilterState out = state;
  out.position_ecef += dx.segment<3>(0);
  out.velocity_ecef += dx.segment<3>(3);
  out.yaw_ned = wrap_angle(state.yaw_ned + dx(6));

  // Joseph form keeps the covariance positive semidefinite.
  const StateCov ikh = StateCov::Identity() - k * h;
  out.covariance = ikh * state.covariance * ikh.transpose() + k * r * k.transpose();
  symmetrize(out.covariance);
  return out;
}

namespace {

Pose to_pose(const FilterState& s, TimestampMs t) {
  Pose p;
  p.position_ecef = s.position_ecef;
  p.velocity_ecef = s.velocity_ecef;
  p.orientation_ned = {0.0, 0.0, s.yaw_ned};
  p.timestamp = t;
  return p;
}

FilterState initialize(const std::vector<GnssFix>& fixes, const NoiseConfig& cfg) {
  const GnssFix& first = fixes.front();
  FilterState s;
  s.timestamp = first.timestamp;
  s.position_ecef = first.position_ecef;
  s.covariance = StateCov::Zero();
  s.covariance.block<3, 3>(0, 0) =
      Eigen::Matrix3d::Identity() * cfg.initial_pos_sigma * cfg.initial_pos_sigma;

  // Last fix within the first second gives the initial velocity and heading.
  const GnssFix* later = nullptr;
  for (const auto& f : fixes) {
    if (f.timestamp <= first.timestamp) continue;
    if (static_cast<double>(f.timestamp - first.timestamp) > kInitWindowMs) break;
    later = &f;
  }

  double vel_var = 100.0;
  double yaw_var = std::numbers::pi * std::numbers::pi;
  if (later != nullptr) {
    const double span = static_cast<double>(later->timestamp - first.timestamp) / 1000.0;
    const Vec3 disp = later->position_ecef - first.position_ecef;
    s.velocity_ecef = disp / span;
    vel_var = 2.0 * cfg.gnss_sigma * cfg.gnss_sigma / (span * span);
    const Vec3 ned = ecef_to_ned(later->position_ecef, first.position_ecef);
    const double horizontal = std::hypot(ned.x(), ned.y());
    if (horizontal >= kMinHeadingDisplacement) {
      s.yaw_ned = std::atan2(ned.y(), ned.x());
      yaw_var = 2.0 * cfg.gnss_sigma * cfg.gnss_sigma / (horizontal * horizontal);
    }
  }
  s.covariance.block<3, 3>(3, 3) = Eigen::Matrix3d::Identity() * vel_var;
  s.covariance(6, 6) = yaw_var;
  return s;
}

}  // namespace

std::vector<Pose> estimate_path(const SensorLog& log, const NoiseConfig& cfg) {
  cfg.validate();
  std::vector<GnssFix> fixes;
  std::copy_if(log.gnss.begin(), log.gnss.end(), std::back_inserter(fixes),
               [](const GnssFix& g) { return g.fix_valid; });
  if (fixes.empty()) throw NoGnss("recording has no valid GNSS fix");
  std::stable_sort(fixes.begin(), fixes.end(), [](const GnssFix& a, const GnssFix& b) {
    return a.timestamp < b.timestamp;
  });

  std::vector<FrameIndex> frames = log.frames;
  std::stable_sort(frames.begin(), frames.end(), [](const FrameIndex& a, const FrameIndex& b) {
    return a.timestamp < b.timestamp;
  });

  FilterState state = initialize(fixes, cfg);
  const TimestampMs t0 = state.timestamp;

  std::vector<Pose> poses;
  poses.reserve(frames.size());
  std::size_t fi = 0;
  // Frames before the first fix are extrapolated back from the initial state.
  for (; fi < frames.size() && frames[fi].timestamp < t0; ++fi) {
    Pose p = to_pose(state, frames[fi].timestamp);
    p.position_ecef += state.velocity_ecef *
                       (static_cast<double>(frames[fi].timestamp - t0) / 1000.0);
    poses.push_back(p);
  }

  // IMU samples before the first fix are discarded.
  std::size_t ii = std::lower_bound(log.imu.begin(), log.imu.end(), t0,
                                    [](const ImuSample& s, TimestampMs t) {
                                      return s.timestamp < t;
                                    }) -
                   log.imu.begin();
  std::size_t gi = 0;
  ImuSample held;  // zero acceleration and rotation until the first sample

  auto advance_to = [&](TimestampMs t) {
    while (state.timestamp < t) {
      const TimestampMs step = std::min<TimestampMs>(t - state.timestamp, 250);
      state = predict(state, held, static_cast<double>(step) / 1000.0, cfg);
    }
  };

  constexpr TimestampMs kNone = std::numeric_limits<TimestampMs>::max();
  while (fi < frames.size()) {
    const TimestampMs t_imu = ii < log.imu.size() ? log.imu[ii].timestamp : kNone;
    const TimestampMs t_fix = gi < fixes.size() ? fixes[gi].timestamp : kNone;
    const TimestampMs t_frame = frames[fi].timestamp;
    const TimestampMs t = std::min({t_imu, t_fix, t_frame});
    advance_to(t);
    while (ii < log.imu.size() && log.imu[ii].timestamp == t) held = log.imu[ii++];
    while (gi < fixes.size() && fixes[gi].timestamp == t) state = update_gnss(state, fixes[gi++], cfg);
    while (fi < frames.size() && frames[fi].timestamp == t) {
      poses.push_back(to_pose(state, t));
      ++fi;
    }
  }
  return poses;
}

std::vector<EgoTrajectory> annotate_future(const std::vector<Pose>& poses) {
  std::vector<EgoTrajectory> out(poses.size());
  const std::size_t n = poses.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 >= n) continue;
    const std::size_t count = std::min<std::size_t>(kTrajectoryLength, n - i);
    std::vector<Vec3> world;
    world.reserve(count);
    for (std::size_t k = 0; k < count; ++k) world.push_back(poses[i + k].position_ecef);
    out[i].points = world_to_ego(world, poses[i]);
  }
  return out;
}

}  // namespace vlagen
