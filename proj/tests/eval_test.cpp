#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vlagen/errors.hpp"
#include "vlagen/eval.hpp"

using namespace vlagen;

namespace {

std::vector<Vec3> random_traj(std::mt19937_64& rng, std::size_t n = 10) {
  std::normal_distribution<double> d(0.0, 5.0);
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(d(rng), d(rng), d(rng));
  return out;
}

std::vector<Vec3> shifted(std::vector<Vec3> pts, const Vec3& by) {
  for (auto& p : pts) p += by;
  return pts;
}

SceneRecords scene(const std::string& id, int full_until) {
  SceneRecords s;
  s.scene_id = id;
  for (int f = 0; f < 600; ++f) {
    FrameRecord r;
    r.frame_id = f;
    r.trajectory_count = f < full_until ? 60 : 59;
    r.trajectory.assign(static_cast<std::size_t>(r.trajectory_count), Vec3::Zero());
    s.records.push_back(std::move(r));
  }
  return s;
}

}  // namespace

TEST(Metrics, IdenticalAndOffset) {
  std::mt19937_64 rng(1);
  const auto t = random_traj(rng);
  EXPECT_EQ(ade(t, t), 0.0);
  EXPECT_EQ(fde(t, t), 0.0);
  const auto s = shifted(t, Vec3(1, 0, 0));
  EXPECT_NEAR(ade(s, t), 1.0, 1e-12);
  EXPECT_NEAR(fde(s, t), 1.0, 1e-12);
}

TEST(Metrics, MatchDirectSummation) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_traj(rng), b = random_traj(rng);
    double sum = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double dx = a[i].x() - b[i].x(), dy = a[i].y() - b[i].y(), dz = a[i].z() - b[i].z();
      const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
      sum += dist;
      worst = std::max(worst, dist);
    }
    EXPECT_NEAR(ade(a, b), sum / 10.0, 1e-12);
    EXPECT_LE(ade(a, b), worst + 1e-12);
    EXPECT_NEAR(fde(a, b), (a.back() - b.back()).norm(), 0.0);
  }
}

TEST(Metrics, RigidInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_traj(rng), b = random_traj(rng);
    const Eigen::Matrix3d r =
        Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    const Vec3 t(n(rng) * 100, n(rng) * 100, n(rng) * 100);
    auto move = [&](std::vector<Vec3> v) {
      for (auto& p : v) p = r * p + t;
      return v;
    };
    EXPECT_NEAR(ade(move(a), move(b)), ade(a, b), 1e-9);
    EXPECT_NEAR(fde(move(a), move(b)), fde(a, b), 1e-9);
  }
}

TEST(Metrics, Errors) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(ade(random_traj(rng, 10), random_traj(rng, 9)), LengthMismatch);
  EXPECT_THROW(fde({}, {}), EmptyTrajectory);
}

TEST(Metrics, EvaluateAveragesPerPair) {
  std::vector<TrajectoryPair> pairs(2);
  pairs[0].ground_truth = pairs[0].predicted = std::vector<Vec3>(10, Vec3::Zero());
  pairs[1].ground_truth = std::vector<Vec3>(10, Vec3::Zero());
  pairs[1].predicted = std::vector<Vec3>(10, Vec3(0, 3, 4));
  const auto r = evaluate(pairs);
  EXPECT_EQ(r.count, 2u);
  EXPECT_DOUBLE_EQ(r.ade, 2.5);
  EXPECT_DOUBLE_EQ(r.fde, 2.5);
  EXPECT_EQ(evaluate({}).count, 0u);
}

TEST(Subsample, TenEvenlySpacedPoints) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 60; ++i) pts.emplace_back(i, 0, 0);
  const auto s = subsample_trajectory(pts);
  ASSERT_EQ(s.size(), 10u);
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(s[k].x(), 5.0 + 6.0 * k);
  pts.pop_back();
  EXPECT_THROW(subsample_trajectory(pts), IncompleteTrajectory);
}

TEST(Split, SeventyFifteenFifteen) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10000; ++i) ids.push_back("s" + std::to_string(i));
  SplitSpec spec;
  spec.seed = 9;
  const auto s = split_scenes(ids, spec);
  EXPECT_EQ(s.train.size(), 7000u);
  EXPECT_EQ(s.val.size(), 1500u);
  EXPECT_EQ(s.test.size(), 1500u);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 10000u);
}

TEST(Split, PartitionForEverySeed) {
  std::vector<std::string> ids;
  for (int i = 0; i < 37; ++i) ids.push_back("r" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitSpec spec;
    spec.seed = seed;
    const auto s = split_scenes(ids, spec);
    std::multiset<std::string> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), ids.size());
    EXPECT_EQ(std::set<std::string>(all.begin(), all.end()).size(), ids.size());
  }
}

TEST(Split, DeterministicAndOrderFree) {
  std::vector<std::string> ids{"c", "a", "d", "b", "e", "f", "g"};
  SplitSpec spec;
  spec.seed = 4;
  const auto a = split_scenes(ids, spec);
  std::reverse(ids.begin(), ids.end());
  const auto b = split_scenes(ids, spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, BadFractions) {
  SplitSpec spec;
  spec.train = 0.8;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.frame_stride = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Split, FiftyFourFramesPerScene) {
  SplitSpec spec;
  spec.train = 1.0;
  spec.val = 0.0;
  spec.test = 0.0;
  const auto d = split_and_subsample({scene("only", 540)}, spec);
  // Frames 0, 10, ..., 530 carry full trajectories.
  ASSERT_EQ(d.train.size(), 54u);
  EXPECT_EQ(d.train.back().frame, 530u);
  EXPECT_TRUE(d.val.empty());
  EXPECT_TRUE(d.test.empty());
}

TEST(Baseline, Stationary) {
  FrameRecord r;
  r.steeringAngleDeg = 30.0;
  for (const auto& p : baseline_predict(r)) EXPECT_EQ(p.norm(), 0.0);
}

TEST(Baseline, StraightAtTenMetresPerSecond) {
  FrameRecord r;
  r.vEgo = 10.0;
  const auto p = baseline_predict(r);
  ASSERT_EQ(p.size(), 10u);
  // The 10th point is trajectory index 59, 2.95 s ahead.
  EXPECT_NEAR(p.back().x(), 29.5, 1e-9);
  EXPECT_NEAR(p.front().x(), 2.5, 1e-9);
  EXPECT_EQ(p.back().y(), 0.0);
}

TEST(Baseline, ArcRadius) {
  const auto p = baseline_arc(10.0, 0.1);
  for (const auto& q : p) {
    EXPECT_NEAR((q - Vec3(0, 100, 0)).norm(), 100.0, 1e-9);
    EXPECT_GT(q.y(), 0.0);
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double t = kSubsampleIndices[k] / 20.0;
    EXPECT_NEAR(std::atan2(p[k].x(), 100.0 - p[k].y()), 0.1 * t, 1e-12);
  }
}

TEST(Baseline, SteeringThroughBicycleModel) {
  FrameRecord r;
  r.vEgo = 10.0;
  r.steeringAngleDeg = 45.0;
  const double yaw_rate = 10.0 * std::tan(3.0 * M_PI / 180.0) / 2.7;
  const auto expected = baseline_arc(10.0, yaw_rate);
  const auto got = baseline_predict(r);
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_LT((got[k] - expected[k]).norm(), 1e-12);
  r.steeringAngleDeg = -45.0;
  EXPECT_LT(baseline_predict(r).back().y(), 0.0);
}

TEST(Words, Tokenize) {
  EXPECT_EQ(tokenize("It is turning LEFT, 15 meters-ahead."),
            (std::vector<std::string>{"it", "is", "turning", "left", "15", "meters", "ahead"}));
  EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(Words, IdenticalCaptionsGiveNothing) {
  std::vector<TrajectoryPair> pairs(20);
  for (auto& p : pairs) {
    p.ground_truth = std::vector<Vec3>(10, Vec3::Zero());
    p.predicted = std::vector<Vec3>(10, Vec3(1, 0, 0));
    p.gt_caption = p.predicted_caption = "The ego vehicle is stopped.";
  }
  const auto r = word_attribution(pairs);
  EXPECT_TRUE(r.by_ade.empty());
  EXPECT_TRUE(r.by_fde.empty());
}

TEST(Words, ToyCorpusHandMeans) {
  std::vector<TrajectoryPair> pairs(12);
  for (int i = 0; i < 12; ++i) {
    auto& p = pairs[static_cast<std::size_t>(i)];
    p.ground_truth = std::vector<Vec3>(10, Vec3::Zero());
    p.predicted = std::vector<Vec3>(10, Vec3(i + 1.0, 0, 0));
    p.gt_caption = i < 8 ? "It is turning left. A bus is near." : "It is turning right.";
    p.predicted_caption = "It is moving straight.";
  }
  const auto common = word_attribution(pairs);
  ASSERT_EQ(common.by_ade.size(), 3u);
  EXPECT_EQ(common.by_ade[0].word, "moving");
  EXPECT_EQ(common.by_ade[1].word, "straight");
  EXPECT_EQ(common.by_ade[2].word, "turning");
  for (const auto& w : common.by_ade) {
    EXPECT_DOUBLE_EQ(w.mean_ade, 6.5);
    EXPECT_EQ(w.frequency, 12);
  }

  const auto all = word_attribution(pairs, default_stopwords(), 3);
  ASSERT_EQ(all.by_ade.size(), 5u);
  EXPECT_EQ(all.by_ade.front().word, "right");
  EXPECT_DOUBLE_EQ(all.by_ade.front().mean_ade, 10.5);
  EXPECT_EQ(all.by_ade.back().word, "left");
  EXPECT_DOUBLE_EQ(all.by_ade.back().mean_fde, 4.5);
  // "bus" sits outside the rule part of the ground truth.
  for (const auto& w : all.by_ade) EXPECT_NE(w.word, "bus");

  EXPECT_EQ(word_attribution(pairs, default_stopwords(), 3, 2).by_fde.size(), 2u);
}

TEST(Words, Csv) {
  const std::string csv = attribution_csv({{"deceleration", 2.236, 5.458, 324}});
  const std::string header = "word,mean_ade,mean_fde,frequency\n";
  ASSERT_EQ(csv.rfind(header, 0), 0u);
  std::stringstream row(csv.substr(header.size()));
  std::string word, a, f, n;
  std::getline(row, word, ',');
  std::getline(row, a, ',');
  std::getline(row, f, ',');
  std::getline(row, n);
  EXPECT_EQ(word, "deceleration");
  EXPECT_EQ(std::stod(a), 2.236);
  EXPECT_EQ(std::stod(f), 5.458);
  EXPECT_EQ(n, "324");
}

TEST(Predictions, ReadAndReject) {
  vlagen::testing::TempDir dir;
  std::string good = R"({"scene_id": "s", "frame_id": 3, "caption": "x", "trajectory": [)";
  for (int i = 0; i < 10; ++i) good += std::string(i ? "," : "") + "[1, 2, 3]";
  good += "]}\n";
  vlagen::testing::spit(dir / "p.jsonl", good + "\n" + good);
  const auto preds = read_predictions(dir / "p.jsonl");
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_EQ(preds[0].scene_id, "s");
  EXPECT_EQ(preds[0].frame_id, 3);
  EXPECT_EQ(preds[0].trajectory[9], Vec3(1, 2, 3));

  vlagen::testing::spit(dir / "bad.jsonl", good + R"({"frame_id": 1, "trajectory": [[0,0,0]]})");
  try {
    read_predictions(dir / "bad.jsonl");
    FAIL() << "expected SchemaViolation";
  } catch (const SchemaViolation& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
