#pragma once

#include <vector>

#include <Eigen/Core>

#include "vlagen/geodesy.hpp"
#include "vlagen/ingest.hpp"

namespace vlagen {

inline constexpr int kStateDim = 7;
using StateCov = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Loosely coupled filter state: ECEF position (0..2), ECEF velocity (3..5)
/// and NED yaw (6).
struct FilterState {
  Vec3 position_ecef = Vec3::Zero();
  Vec3 velocity_ecef = Vec3::Zero();
  double yaw_ned = 0.0;
  StateCov covariance = StateCov::Identity();
  TimestampMs timestamp = 0;
};

struct NoiseConfig {
  double gnss_sigma = 1.5;          // m
  double accel_sigma = 0.3;         // m/s^2
  double gyro_sigma = 0.01;         // rad/s
  double initial_pos_sigma = 5.0;   // m

  void validate() const;
};

inline constexpr double kMaxPredictDt = 0.25;  // s

/// Propagates the state by `dt` seconds with one IMU sample held constant.
/// Throws InvalidDt unless 0 < dt <= 0.25.
FilterState predict(const FilterState& state, const ImuSample& imu, double dt,
                    const NoiseConfig& cfg = {});

/// Position measurement update. Throws InvalidFix for an invalid fix.
FilterState update_gnss(const FilterState& state, const GnssFix& fix,
                        const NoiseConfig& cfg = {});

/// Runs the filter over a recording and samples one pose per frame.
/// Throws NoGnss when the log has no valid fix.
std::vector<Pose> estimate_path(const SensorLog& log, const NoiseConfig& cfg = {});

inline constexpr int kTrajectoryLength = 60;

/// Ego-frame future path of one frame. Point k is the pose k frames ahead, so
/// point 0 is the frame's own position.
struct EgoTrajectory {
  std::vector<Vec3> points;

  int trajectory_count() const { return static_cast<int>(points.size()); }
  bool complete() const { return points.size() == kTrajectoryLength; }
};

/// One trajectory per pose from poses i..i+59 in the ego frame of pose i.
/// A frame without any successor gets an empty trajectory.
std::vector<EgoTrajectory> annotate_future(const std::vector<Pose>& poses);

}  // namespace vlagen
