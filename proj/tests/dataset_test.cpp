#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.hpp"
#include "vlagen/dataset.hpp"
#include "vlagen/errors.hpp"

using namespace vlagen;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json fixture() {
  return json::parse(vlagen::testing::slurp(fs::path(VLAGEN_TEST_DATA) / "frame_569.json"));
}

FrameRecord random_record(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1e3, 1e3);
  std::uniform_int_distribution<int> coin(0, 1), count(0, kTrajectoryLength);
  auto vec = [&] { return Vec3(d(rng), d(rng), d(rng)); };
  FrameRecord r;
  r.frame_id = static_cast<std::int64_t>(rng() % 100000);
  r.image_path = "images/rec/" + std::to_string(r.frame_id) + ".png";
  r.vEgo = std::abs(d(rng)) / 30.0;
  r.aEgo = d(rng) / 300.0;
  r.steeringAngleDeg = d(rng) / 2.0;
  r.brakePressed = coin(rng);
  r.leftBlinker = coin(rng);
  r.gearShifter = coin(rng) ? "drive" : "park";
  if (coin(rng)) r.orientations_calib = vec();
  r.orientations_ned = vec();
  r.positions_ecef = vec() * 4000.0;
  r.velocities_ecef = vec();
  if (coin(rng)) r.accelerations_device = vec();
  r.timestamp = 1657248173200 + static_cast<std::int64_t>(rng() % 1000000);
  if (coin(rng)) {
    r.extrinsic_matrix = CameraModel::reference().extrinsic;
    r.intrinsic_matrix = CameraModel::reference().intrinsic;
  }
  r.trajectory_count = count(rng);
  for (int i = 0; i < r.trajectory_count; ++i) r.trajectory.push_back(vec());
  r.caption = coin(rng) ? "The ego vehicle is stopped." : "";
  if (coin(rng)) r.traffic_light = RecordLight{LightState::green, ArrowDirection::none};
  if (coin(rng)) r.lead_vehicle = LeadVehicleObs{r.frame_id, 12.5, 0.3, 8.0, -0.5};
  return r;
}

AlignedFrame frame_with_can(std::int64_t id, TimestampMs ts) {
  AlignedFrame f;
  f.frame = {id, ts, "images/x.png"};
  CanFrame c;
  c.timestamp = ts;
  c.v_ego = 5.0;
  c.left_blinker = true;
  f.can = c;
  return f;
}

}  // namespace

TEST(Fixture, Frame569Values) {
  const FrameRecord r = record_from_line(fixture().dump());
  EXPECT_EQ(r.frame_id, 569);
  EXPECT_EQ(r.vEgo, 7.43082332611084);
  EXPECT_EQ(r.timestamp, 1657248173200);
  EXPECT_EQ(r.gearShifter, "drive");
  ASSERT_TRUE(r.intrinsic_matrix);
  EXPECT_EQ((*r.intrinsic_matrix)(0, 0), 2648.0);
  EXPECT_EQ((*r.intrinsic_matrix)(0, 2), 964.0);
  EXPECT_EQ((*r.intrinsic_matrix)(1, 2), 604.0);
  EXPECT_EQ(r.trajectory_count, static_cast<int>(r.trajectory.size()));
  ASSERT_FALSE(r.trajectory.empty());
  EXPECT_EQ(r.trajectory[0], Vec3::Zero());
  EXPECT_TRUE(std::signbit(r.trajectory[0].y()));
  EXPECT_EQ(r.caption, "");
}

TEST(Fixture, Frame569ReSerializes) {
  const json in = fixture();
  const json out = json::parse(record_to_line(record_from_line(in.dump())));
  for (const auto& [key, value] : in.items()) {
    ASSERT_TRUE(out.contains(key)) << key;
    EXPECT_EQ(out.at(key), value) << key;
  }
}

TEST(Records, EveryKeyPresentInOrder) {
  std::mt19937_64 rng(1);
  const json j = json::parse(record_to_line(random_record(rng)));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  // nlohmann::json sorts keys, so compare as sets and check order on the raw line.
  std::vector<std::string> expected = record_keys();
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(keys, expected);
  const std::string line = record_to_line(random_record(rng));
  std::size_t pos = 0;
  for (const auto& k : record_keys()) {
    const auto at = line.find("\"" + k + "\":", pos);
    ASSERT_NE(at, std::string::npos) << k;
    pos = at;
  }
  EXPECT_EQ(line.back(), '\n');
}

TEST(Records, RoundTripThousand) {
  std::mt19937_64 rng(2);
  std::vector<FrameRecord> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back(random_record(rng));
  vlagen::testing::TempDir dir;
  emit_jsonl(recs, dir / "r.jsonl");
  const auto back = read_jsonl(dir / "r.jsonl");
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i], recs[i]) << i;
    EXPECT_LE(back[i].trajectory_count, kTrajectoryLength);
  }
}

TEST(Records, SchemaViolations) {
  std::mt19937_64 rng(3);
  json j = json::parse(record_to_line(random_record(rng)));
  j.erase("trajectory_count");
  EXPECT_THROW(record_from_line(j.dump(), 7), SchemaViolation);
  try {
    record_from_line(j.dump(), 7);
  } catch (const SchemaViolation& e) {
    EXPECT_EQ(e.line(), 7u);
  }
  j = json::parse(record_to_line(random_record(rng)));
  j["vEgo"] = "fast";
  EXPECT_THROW(record_from_line(j.dump()), SchemaViolation);
  j = json::parse(record_to_line(random_record(rng)));
  j["trajectory_count"] = j["trajectory_count"].get<int>() + 1;
  EXPECT_THROW(record_from_line(j.dump()), SchemaViolation);
  EXPECT_THROW(record_from_line("{oops"), SchemaViolation);
}

TEST(Records, EmptyListGivesEmptyFile) {
  vlagen::testing::TempDir dir;
  emit_jsonl({}, dir / "empty.jsonl");
  ASSERT_TRUE(fs::exists(dir / "empty.jsonl"));
  EXPECT_EQ(fs::file_size(dir / "empty.jsonl"), 0u);
  EXPECT_TRUE(read_jsonl(dir / "empty.jsonl").empty());
}

TEST(Assemble, CopiesFrameAndPose) {
  const AlignedFrame f = frame_with_can(42, 1000);
  Pose pose;
  pose.timestamp = 1000;
  pose.position_ecef = Vec3(1, 2, 3);
  pose.orientation_ned.yaw = 0.5;
  EgoTrajectory traj;
  for (int i = 0; i < 30; ++i) traj.points.emplace_back(i, 0, 0);
  const auto r = assemble_record(f, pose, traj, "cap", CameraModel::reference());
  EXPECT_EQ(r.frame_id, 42);
  EXPECT_EQ(r.vEgo, 5.0);
  EXPECT_TRUE(r.leftBlinker);
  EXPECT_EQ(r.orientations_ned.z(), 0.5);
  EXPECT_EQ(r.positions_ecef, Vec3(1, 2, 3));
  EXPECT_EQ(r.trajectory_count, 30);
  EXPECT_EQ(r.caption, "cap");
  EXPECT_TRUE(r.extrinsic_matrix);
  EXPECT_FALSE(r.orientations_calib);
}

TEST(Assemble, StationaryTrajectoryIsAllZero) {
  std::vector<Pose> poses(70);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    poses[i].position_ecef = Vec3(6378137.0, 0, 0);
    poses[i].timestamp = static_cast<TimestampMs>(50 * i);
  }
  const auto trajs = annotate_future(poses);
  const auto r = assemble_record(frame_with_can(0, 0), poses[0], trajs[0], "", std::nullopt);
  EXPECT_EQ(r.trajectory_count, 60);
  for (const auto& p : r.trajectory) EXPECT_EQ(p.norm(), 0.0);
}

TEST(Assemble, Errors) {
  Pose pose;
  pose.timestamp = 1050;
  EXPECT_THROW(assemble_record(frame_with_can(1, 1000), pose, {}, "", std::nullopt),
               FrameMismatch);
  AlignedFrame no_can = frame_with_can(1, 1000);
  no_can.can.reset();
  pose.timestamp = 1000;
  EXPECT_THROW(assemble_record(no_can, pose, {}, "", std::nullopt), DataError);
  LeadVehicleObs lead;
  lead.frame_id = 2;
  EXPECT_THROW(assemble_record(frame_with_can(1, 1000), pose, {}, "", std::nullopt, lead),
               FrameMismatch);
}

TEST(Stats, HoursAndFractions) {
  EXPECT_NEAR(frames_to_hours(6000000), 83.33, 0.005);
  EXPECT_DOUBLE_EQ(frames_to_hours(72000), 1.0);

  std::vector<FrameRecord> recs(1000);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].vEgo = 10.0;
    recs[i].leftBlinker = i < 100;
    recs[i].rightBlinker = i >= 939;
    if (i % 4 == 0) recs[i].traffic_light = RecordLight{};
  }
  const auto s = compute_stats(recs, 2);
  EXPECT_EQ(s.blinker_frames, 161);
  EXPECT_DOUBLE_EQ(s.blinker_fraction, 0.161);
  EXPECT_DOUBLE_EQ(s.traffic_light_fraction, 0.25);
  EXPECT_EQ(s.frame_count, 1000);
  EXPECT_EQ(s.scene_count, 2);
  EXPECT_FALSE(s.empty);
  EXPECT_TRUE(s.speed_kmh.valid);
  const json j = json::parse(s.to_json());
  EXPECT_EQ(j.at("blinker_frames"), 161);
}

TEST(Stats, EmptyDataset) {
  const auto s = compute_stats({}, 0);
  EXPECT_TRUE(s.empty);
  EXPECT_EQ(s.hours, 0.0);
  EXPECT_EQ(s.blinker_fraction, 0.0);
  EXPECT_FALSE(s.speed_kmh.valid);
}

TEST(Overlay, StraightAheadConvergesToHorizon) {
  FrameRecord r;
  r.extrinsic_matrix = CameraModel::reference().extrinsic;
  r.intrinsic_matrix = CameraModel::reference().intrinsic;
  for (int i = 0; i < 60; ++i) r.trajectory.emplace_back(2.0 + 0.5 * i, 0.0, 0.0);
  r.trajectory_count = 60;
  const auto pts = overlay_geometry(r);
  ASSERT_EQ(pts.size(), 60u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(pts[i].index, static_cast<int>(i));
    EXPECT_NEAR(pts[i].u, 964.0, 50.0);
    if (i > 0) EXPECT_LT(std::abs(pts[i].v - 604.0), std::abs(pts[i - 1].v - 604.0));
  }
  EXPECT_GT(pts.front().v, 604.0);  // the road is below the camera
}

TEST(Overlay, StationaryAndMissingCamera) {
  FrameRecord r;
  r.extrinsic_matrix = CameraModel::reference().extrinsic;
  r.intrinsic_matrix = CameraModel::reference().intrinsic;
  r.trajectory.assign(60, Vec3::Zero());
  r.trajectory_count = 60;
  EXPECT_LE(overlay_geometry(r).size(), 1u);
  r.intrinsic_matrix.reset();
  EXPECT_THROW(overlay_geometry(r), MissingCamera);
  EXPECT_THROW(overlay_csv({r}), MissingCamera);
}

TEST(Overlay, CsvRows) {
  FrameRecord r;
  r.frame_id = 9;
  r.extrinsic_matrix = CameraModel::reference().extrinsic;
  r.intrinsic_matrix = CameraModel::reference().intrinsic;
  r.trajectory = {Vec3(10, 0, 0), Vec3(-10, 0, 0)};
  r.trajectory_count = 2;
  const std::string csv = overlay_csv({r});
  EXPECT_EQ(csv.rfind("frame_id,u,v\n9,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Manifest, RoundTrip) {
  SceneManifest m;
  m.scene_id = "rec_000600";
  m.recording_id = "rec";
  m.start_frame = 600;
  m.eligible = true;
  m.verdicts = {true, 3, 1};
  m.features.max_abs_steering = 12.5;
  m.features.turn_signal_used = true;
  m.features.left_signal_frames = 4;
  m.weight = 0.125;
  m.windows = make_windows(600);
  vlagen::testing::TempDir dir;
  write_manifest({m, m}, dir / "m.jsonl");
  const auto back = read_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].scene_id, m.scene_id);
  EXPECT_EQ(back[1].start_frame, 600);
  EXPECT_EQ(back[1].verdicts, m.verdicts);
  EXPECT_EQ(back[1].features.left_signal_frames, 4);
  EXPECT_EQ(back[1].weight, 0.125);
  ASSERT_EQ(back[1].windows.size(), 10u);
  EXPECT_EQ(back[1].windows[9].representatives, m.windows[9].representatives);
  EXPECT_THROW(manifest_from_line(R"({"scene_id": "x"})", 3), SchemaViolation);
}
