#include <cmath>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.hpp"
#include "vlagen/errors.hpp"
#include "vlagen/synth.hpp"

using namespace vlagen;
namespace fs = std::filesystem;

namespace {

GroundTruth quiet(ProfileKind kind, double speed, double yaw_rate = 0.0, double duration = 33.0) {
  MotionProfile p;
  p.kind = kind;
  p.speed = speed;
  p.yaw_rate = yaw_rate;
  p.duration = duration;
  TruthOptions o;
  o.with_traffic_lights = false;
  o.with_lead_vehicle = false;
  return gen_truth(p, o);
}

// Radius of the circle through three points.
double circumradius(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double ab = (a - b).norm(), bc = (b - c).norm(), ca = (c - a).norm();
  const double area2 = ((b - a).cross(c - a)).norm();
  return ab * bc * ca / (2.0 * area2);
}

}  // namespace

TEST(Truth, StraightDisplacement) {
  const auto t = quiet(ProfileKind::straight, 10.0, 0.0, 30.0);
  ASSERT_EQ(t.poses.size(), 600u);
  // 599 intervals of 0.05 s from the first to the last frame.
  EXPECT_NEAR((t.position_ned.back() - t.position_ned.front()).norm(), 10.0 * 29.95, 1e-9);
  for (const auto& c : t.log.can) {
    EXPECT_EQ(c.v_ego, 10.0);
    EXPECT_EQ(c.gear, Gear::drive);
  }
}

TEST(Truth, TurnRadius) {
  const auto t = quiet(ProfileKind::constant_turn, 10.0, 0.1, 30.0);
  const auto& p = t.position_ned;
  for (std::size_t k = 0; k + 200 < p.size(); k += 97) {
    EXPECT_NEAR(circumradius(p[k], p[k + 100], p[k + 200]), 100.0, 1e-2);
  }
}

TEST(Truth, StopAndGoSchedule) {
  const auto t = quiet(ProfileKind::stop_and_go, 12.0);
  double min_speed = 1e9;
  std::vector<int> signs;
  for (const auto& c : t.log.can) {
    min_speed = std::min(min_speed, c.v_ego);
    const int s = c.a_ego > 0.0 ? 1 : (c.a_ego < 0.0 ? -1 : 0);
    if (s != 0 && (signs.empty() || signs.back() != s)) signs.push_back(s);
  }
  EXPECT_NEAR(min_speed, 0.0, 1e-12);
  ASSERT_GE(signs.size(), 3u);
  EXPECT_EQ(signs.front(), -1);
  for (std::size_t i = 1; i < signs.size(); ++i) EXPECT_EQ(signs[i], -signs[i - 1]);
}

TEST(Truth, KinematicConsistency) {
  for (auto kind : {ProfileKind::straight, ProfileKind::constant_turn, ProfileKind::stop_and_go,
                    ProfileKind::lane_change}) {
    const auto t = quiet(kind, 15.0, -0.08);
    for (std::size_t k = 0; k + 1 < t.position_ned.size(); ++k) {
      const Vec3 dp = t.position_ned[k + 1] - t.position_ned[k];
      const Vec3 v = 0.5 * (t.velocity_ned[k] + t.velocity_ned[k + 1]);
      EXPECT_LT((dp - v * 0.05).norm(), 1e-9) << to_string(kind) << " step " << k;
    }
  }
}

TEST(Truth, SteeringSignFollowsTurn) {
  const auto left = quiet(ProfileKind::constant_turn, 10.0, -0.1, 5.0);
  const auto right = quiet(ProfileKind::constant_turn, 10.0, 0.1, 5.0);
  // Negative NED yaw rate is a left turn.
  EXPECT_GT(left.log.can[50].steering_angle, 0.0);
  EXPECT_LT(right.log.can[50].steering_angle, 0.0);
  EXPECT_NEAR(left.log.can[50].steering_angle,
              std::atan(0.1 * 2.7 / 10.0) * 15.0 * 180.0 / M_PI, 1e-9);
}

TEST(Truth, BadProfile) {
  MotionProfile p;
  p.duration = 0.0;
  EXPECT_THROW(gen_truth(p), ConfigError);
  EXPECT_THROW(profile_from_string("hover"), ConfigError);
  EXPECT_EQ(profile_from_string("lane_change"), ProfileKind::lane_change);
}

TEST(Corrupt, ZeroSpecIsIdentity) {
  const auto t = quiet(ProfileKind::constant_turn, 10.0, 0.05, 10.0);
  const auto c = corrupt(t, {}, 123);
  EXPECT_EQ(c.log.gnss, t.log.gnss);
  EXPECT_EQ(c.log.imu, t.log.imu);
  EXPECT_EQ(c.log.frames, t.log.frames);
  EXPECT_TRUE(c.labels.jump_frames.empty());
  EXPECT_TRUE(c.labels.vibration_frames.empty());
}

TEST(Corrupt, OneJumpOneBigStep) {
  const auto t = quiet(ProfileKind::straight, 10.0, 0.0, 30.0);
  CorruptionSpec spec;
  spec.jumps.push_back({10.0, 5.0});
  const auto c = corrupt(t, spec, 1);
  int big = 0;
  std::size_t where = 0;
  for (std::size_t k = 1; k < c.log.gnss.size(); ++k) {
    const double step = (c.log.gnss[k].position_ecef - c.log.gnss[k - 1].position_ecef).norm();
    if (step > 1.59) {
      ++big;
      where = k;
    }
  }
  EXPECT_EQ(big, 1);
  EXPECT_EQ(where, 200u);
  EXPECT_EQ(c.labels.jump_frames, (std::vector<std::int64_t>{200}));
}

TEST(Corrupt, VibrationLabels) {
  const auto t = quiet(ProfileKind::straight, 10.0, 0.0, 30.0);
  CorruptionSpec spec;
  spec.vibrations.push_back({5.0, 10.0, 0.2, 10.0});
  const auto c = corrupt(t, spec, 1);
  ASSERT_EQ(c.labels.vibration_frames.size(), 101u);
  EXPECT_EQ(c.labels.vibration_frames.front(), 100);
  EXPECT_EQ(c.labels.vibration_frames.back(), 200);
  // Lateral offsets of +-0.2 m alternate at every 20 Hz fix.
  const Vec3 d100 = c.log.gnss[100].position_ecef - t.log.gnss[100].position_ecef;
  const Vec3 d101 = c.log.gnss[101].position_ecef - t.log.gnss[101].position_ecef;
  EXPECT_NEAR(d100.norm(), 0.2, 1e-6);
  EXPECT_NEAR((d100 + d101).norm(), 0.0, 1e-6);
  EXPECT_EQ(c.log.gnss[99].position_ecef, t.log.gnss[99].position_ecef);
}

TEST(Corrupt, DropoutAndNoiseSeeded) {
  const auto t = quiet(ProfileKind::straight, 10.0, 0.0, 10.0);
  CorruptionSpec spec;
  spec.gnss_sigma = 0.5;
  spec.imu_accel_sigma = 0.1;
  spec.gnss_dropout.push_back({2.0, 3.0});
  const auto a = corrupt(t, spec, 9), b = corrupt(t, spec, 9), c = corrupt(t, spec, 10);
  EXPECT_EQ(a.log.gnss, b.log.gnss);
  EXPECT_EQ(a.log.imu, b.log.imu);
  EXPECT_NE(a.log.gnss, c.log.gnss);
  int invalid = 0;
  for (const auto& f : a.log.gnss) invalid += f.fix_valid ? 0 : 1;
  EXPECT_EQ(invalid, 21);

  spec = {};
  spec.vibrations.push_back({1.0, 2.0, -0.1, 10.0});
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Corpus, DeterministicOnRerun) {
  CorpusSpec spec;
  spec.n_scenes = 4;
  spec.seed = 3;
  spec.jump_fraction = 0.25;
  spec.vibration_fraction = 0.25;
  vlagen::testing::TempDir a, b;
  const auto sa = gen_corpus(a.path(), spec);
  gen_corpus(b.path(), spec);
  ASSERT_EQ(sa.size(), 4u);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    EXPECT_EQ(vlagen::testing::slurp(e.path()), vlagen::testing::slurp(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 4u * 5u);
  int jumps = 0, vibs = 0;
  for (const auto& s : sa) {
    jumps += !s.labels.jump_frames.empty();
    vibs += !s.labels.vibration_frames.empty();
    EXPECT_TRUE(fs::exists(a / (s.recording_id + "/truth.jsonl")));
  }
  EXPECT_EQ(jumps, 1);
  EXPECT_EQ(vibs, 1);
  EXPECT_EQ(sa[2].recording_id, "synth_0002");
}

TEST(Corpus, HoursAndMix) {
  CorpusSpec spec;
  spec.n_scenes = 10;
  spec.seed = 1;
  spec.duration = 30.0;
  spec.mix = {{ProfileKind::straight, 0.9}, {ProfileKind::constant_turn, 0.1}};
  vlagen::testing::TempDir dir;
  const auto scenes = gen_corpus(dir.path(), spec);
  const auto corpus = nlohmann::json::parse(vlagen::testing::slurp(dir / "corpus.json"));
  EXPECT_DOUBLE_EQ(corpus.at("scene_hours").get<double>(), 10 * 30.0 / 3600.0);
  int turns = 0;
  for (const auto& s : scenes) turns += s.kind == ProfileKind::constant_turn;
  EXPECT_EQ(turns, 1);
}

TEST(Corpus, SceneSeedsDiffer) {
  EXPECT_NE(scene_seed(1, 0), scene_seed(1, 1));
  EXPECT_NE(scene_seed(1, 0), scene_seed(2, 0));
  EXPECT_EQ(scene_seed(5, 7), scene_seed(5, 7));
}
