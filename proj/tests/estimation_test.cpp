#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "vlagen/errors.hpp"
#include "vlagen/estimation.hpp"
#include "vlagen/synth.hpp"

using namespace vlagen;

namespace {

TruthOptions quiet() {
  TruthOptions o;
  o.with_traffic_lights = false;
  o.with_lead_vehicle = false;
  return o;
}

GroundTruth truth_of(ProfileKind kind, double speed, double yaw_rate, double duration,
                     double heading = 0.4) {
  MotionProfile p;
  p.kind = kind;
  p.speed = speed;
  p.yaw_rate = yaw_rate;
  p.duration = duration;
  TruthOptions o = quiet();
  o.heading = heading;
  return gen_truth(p, o);
}

double rmse(const std::vector<Pose>& est, const std::vector<Pose>& truth, std::size_t from = 0) {
  double sq = 0.0;
  for (std::size_t i = from; i < est.size(); ++i)
    sq += (est[i].position_ecef - truth[i].position_ecef).squaredNorm();
  return std::sqrt(sq / static_cast<double>(est.size() - from));
}

FilterState state_at(const Vec3& p, const Vec3& v) {
  FilterState s;
  s.position_ecef = p;
  s.velocity_ecef = v;
  s.covariance = StateCov::Identity();
  return s;
}

const Vec3 kSurface(-3959574.486029379, 3328427.354910454, 3719065.7393601397);

}  // namespace

TEST(Predict, ConstantVelocity) {
  const Vec3 v(3.0, -1.5, 0.25);
  const FilterState s = predict(state_at(kSurface, v), ImuSample{}, 0.05);
  EXPECT_EQ(s.position_ecef, kSurface + v * 0.05);
  EXPECT_EQ(s.velocity_ecef, v);
  EXPECT_EQ(s.timestamp, 50);
}

TEST(Predict, RejectsBadDt) {
  const FilterState s = state_at(kSurface, Vec3::Zero());
  EXPECT_THROW(predict(s, ImuSample{}, 0.0), InvalidDt);
  EXPECT_THROW(predict(s, ImuSample{}, -0.01), InvalidDt);
  EXPECT_THROW(predict(s, ImuSample{}, 0.26), InvalidDt);
  EXPECT_NO_THROW(predict(s, ImuSample{}, 0.25));
}

TEST(Predict, TraceGrows) {
  FilterState s = state_at(kSurface, Vec3(10, 0, 0));
  for (int i = 0; i < 20; ++i) {
    const FilterState next = predict(s, ImuSample{}, 0.05);
    EXPECT_GT(next.covariance.trace(), s.covariance.trace());
    s = next;
  }
}

TEST(Predict, ForwardAccelAlongHeading) {
  // Facing east: forward acceleration must change the east velocity only.
  FilterState s = state_at(kSurface, Vec3::Zero());
  s.yaw_ned = M_PI / 2;
  ImuSample imu;
  imu.accel_device = Vec3(2.0, 0.0, 0.0);
  const FilterState out = predict(s, imu, 0.1);
  const Vec3 dv_ned = ecef_to_ned_rotation(ecef_to_geodetic(kSurface)) * out.velocity_ecef;
  EXPECT_NEAR(dv_ned.x(), 0.0, 1e-12);
  EXPECT_NEAR(dv_ned.y(), 0.2, 1e-12);
}

TEST(Predict, GyroSign) {
  // Counter-clockwise about device up turns the NED yaw to the left.
  FilterState s = state_at(kSurface, Vec3::Zero());
  ImuSample imu;
  imu.gyro_device = Vec3(0.0, 0.0, 0.2);
  EXPECT_NEAR(predict(s, imu, 0.1).yaw_ned, -0.02, 1e-15);
}

TEST(Update, ConsistentFixLeavesStateAlone) {
  FilterState s = state_at(kSurface, Vec3(1, 2, 3));
  s.covariance = StateCov::Identity() * 1e-12;
  const FilterState out = update_gnss(s, {0, kSurface, true});
  EXPECT_LT((out.position_ecef - kSurface).norm(), 1e-9);
  EXPECT_LT((out.velocity_ecef - Vec3(1, 2, 3)).norm(), 1e-9);
}

TEST(Update, VarianceContracts) {
  FilterState s = state_at(kSurface, Vec3::Zero());
  s.covariance.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity() * 25.0;
  NoiseConfig cfg;
  cfg.gnss_sigma = 1.5;
  const FilterState out = update_gnss(s, {0, kSurface + Vec3(1, 1, 1), true}, cfg);
  EXPECT_LT((out.covariance.block<3, 3>(0, 0).trace()), 25.0 * 3);
}

TEST(Update, ScalarGainByHand) {
  // Prior variance 4, measurement variance 4: gain 4 / (4 + 4) = 0.5.
  FilterState s = state_at(kSurface, Vec3::Zero());
  s.covariance = StateCov::Zero();
  s.covariance.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity() * 4.0;
  NoiseConfig cfg;
  cfg.gnss_sigma = 2.0;
  const Vec3 innovation(2.0, -4.0, 1.0);
  const FilterState out = update_gnss(s, {0, kSurface + innovation, true}, cfg);
  EXPECT_LT((out.position_ecef - (kSurface + 0.5 * innovation)).norm(), 1e-9);
  EXPECT_NEAR(out.covariance(0, 0), 2.0, 1e-12);
}

TEST(Update, InvalidFix) {
  EXPECT_THROW(update_gnss(state_at(kSurface, Vec3::Zero()), {0, kSurface, false}), InvalidFix);
}

TEST(Covariance, SymmetricPsdThroughout) {
  FilterState s = state_at(kSurface, Vec3(5, 5, 0));
  s.covariance = StateCov::Identity() * 3.0;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    ImuSample imu;
    imu.accel_device = Vec3(n(rng), n(rng), 0.1 * n(rng));
    imu.gyro_device = Vec3(0, 0, 0.1 * n(rng));
    s = predict(s, imu, 0.05);
    if (i % 4 == 0) s = update_gnss(s, {s.timestamp, s.position_ecef + Vec3(n(rng), n(rng), n(rng)), true});
    const StateCov& c = s.covariance;
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    Eigen::SelfAdjointEigenSolver<StateCov> eig(c);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(EstimatePath, NoGnss) {
  SensorLog log;
  log.frames = {{0, 0, "a"}};
  EXPECT_THROW(estimate_path(log), NoGnss);
  log.gnss = {{0, kSurface, false}};
  EXPECT_THROW(estimate_path(log), NoGnss);
}

TEST(EstimatePath, NoiseFreeConstantVelocity) {
  const GroundTruth t = truth_of(ProfileKind::straight, 13.0, 0.0, 30.0, -1.2);
  const auto est = estimate_path(t.log);
  ASSERT_EQ(est.size(), t.poses.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    EXPECT_LT((est[i].position_ecef - t.poses[i].position_ecef).norm(), 1e-6) << i;
    EXPECT_EQ(est[i].timestamp, t.poses[i].timestamp);
  }
}

TEST(EstimatePath, StationaryNoisyBeatsRawFixes) {
  const GroundTruth t = truth_of(ProfileKind::straight, 0.0, 0.0, 30.0);
  CorruptionSpec c;
  c.gnss_sigma = 1.5;
  const auto noisy = corrupt(t, c, 17);
  const auto est = estimate_path(noisy.log);
  ASSERT_EQ(est.size(), 600u);
  EXPECT_LT(rmse(est, t.poses), 1.5);
}

TEST(EstimatePath, ConstantTurnNoisy) {
  const GroundTruth t = truth_of(ProfileKind::constant_turn, 10.0, 0.1, 30.0);
  CorruptionSpec c;
  c.gnss_sigma = 1.0;
  const auto est = estimate_path(corrupt(t, c, 18).log);
  EXPECT_LT(rmse(est, t.poses), 1.0);
}

TEST(EstimatePath, SpeedTracksTruth) {
  const GroundTruth t = truth_of(ProfileKind::stop_and_go, 12.0, 0.0, 30.0);
  CorruptionSpec c;
  c.gnss_sigma = 1.5;
  c.imu_accel_sigma = 0.05;
  const auto est = estimate_path(corrupt(t, c, 19).log);
  for (std::size_t i = 40; i < est.size(); ++i) {
    EXPECT_NEAR(est[i].velocity_ecef.norm(), t.velocity_ned[i].norm(), 3.0 * 1.5) << i;
  }
}

TEST(EstimatePath, ImuBeforeFirstFixIgnored) {
  GroundTruth t = truth_of(ProfileKind::constant_turn, 9.0, -0.05, 10.0);
  SensorLog log = t.log;
  // Fixes only from 1 s on.
  log.gnss.erase(log.gnss.begin(), log.gnss.begin() + 20);
  const auto base = estimate_path(log);
  SensorLog junk = log;
  for (auto& s : junk.imu) {
    if (s.timestamp < log.gnss.front().timestamp) {
      s.accel_device = Vec3(40.0, -30.0, 9.0);
      s.gyro_device = Vec3(1.0, 2.0, 3.0);
    }
  }
  const auto other = estimate_path(junk);
  ASSERT_EQ(base.size(), other.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].position_ecef, other[i].position_ecef);
    EXPECT_EQ(base[i].orientation_ned.yaw, other[i].orientation_ned.yaw);
  }
}

TEST(Annotate, StationaryIsAllZero) {
  const GroundTruth t = truth_of(ProfileKind::straight, 0.0, 0.0, 5.0);
  const auto trajs = annotate_future(t.poses);
  ASSERT_TRUE(trajs[0].complete());
  for (const auto& p : trajs[0].points) EXPECT_EQ(p, Vec3::Zero());
}

TEST(Annotate, CountsNearTheEnd) {
  const GroundTruth t = truth_of(ProfileKind::straight, 5.0, 0.0, 10.0);
  const auto trajs = annotate_future(t.poses);
  const std::size_t n = trajs.size();
  EXPECT_EQ(trajs[n - 1].trajectory_count(), 0);
  EXPECT_FALSE(trajs[n - 1].complete());
  EXPECT_EQ(trajs[n - 2].trajectory_count(), 2);
  EXPECT_EQ(trajs[n - 30].trajectory_count(), 30);
  EXPECT_EQ(trajs[n - 60].trajectory_count(), 60);
  EXPECT_EQ(trajs[0].trajectory_count(), 60);
}

TEST(Annotate, FirstRowIsOrigin) {
  const GroundTruth t = truth_of(ProfileKind::lane_change, 15.0, 0.0, 20.0, 2.5);
  for (const auto& traj : annotate_future(t.poses)) {
    if (traj.points.empty()) continue;
    EXPECT_EQ(traj.points[0].x(), 0.0);
    EXPECT_EQ(traj.points[0].y(), 0.0);
    EXPECT_EQ(traj.points[0].z(), 0.0);
  }
}

TEST(Annotate, ReproducesFuturePoses) {
  const GroundTruth t = truth_of(ProfileKind::constant_turn, 11.0, 0.08, 8.0, -0.3);
  const auto trajs = annotate_future(t.poses);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t k = 0; k < trajs[i].points.size(); ++k) {
      EXPECT_LT((ego_to_world(trajs[i].points[k], t.poses[i]) - t.poses[i + k].position_ecef).norm(),
                1e-6);
    }
  }
}

TEST(Annotate, PublishedFinalRow) {
  // The published 60th point lies 20.998 m ahead after 59 frames.
  const double x_final = 20.998125620182435;
  const GroundTruth t = truth_of(ProfileKind::straight, x_final / 2.95, 0.0, 5.0, 1.0);
  const auto trajs = annotate_future(t.poses);
  const Vec3 last = trajs[0].points.back();
  EXPECT_NEAR(last.x(), x_final, 1e-6);
  EXPECT_LT(std::abs(last.y()), 0.6);
}

TEST(Annotate, TurnsLeftAsPositiveY) {
  // Negative NED yaw rate is a left turn.
  const GroundTruth t = truth_of(ProfileKind::constant_turn, 10.0, -0.1, 5.0);
  const Vec3 last = annotate_future(t.poses)[0].points.back();
  EXPECT_GT(last.y(), 0.0);
  // Chord of a 100 m circle after 29.5 m of arc, up to the integration step.
  const double r = 100.0, phi = 29.5 / r;
  EXPECT_NEAR(last.x(), r * std::sin(phi), 1e-3);
  EXPECT_NEAR(last.y(), r * (1.0 - std::cos(phi)), 1e-3);
}
