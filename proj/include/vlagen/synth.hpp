#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vlagen/geodesy.hpp"
#include "vlagen/ingest.hpp"

namespace vlagen {

enum class ProfileKind { straight, constant_turn, stop_and_go, lane_change };

const char* to_string(ProfileKind k);
ProfileKind profile_from_string(const std::string& s);  // throws ConfigError

struct MotionProfile {
  ProfileKind kind = ProfileKind::straight;
  double speed = 10.0;     // m/s, cruise speed
  double yaw_rate = 0.0;   // rad/s, constant_turn only
  double duration = 33.0;  // s
  std::uint64_t seed = 0;  // traffic light / lead vehicle placement
};

struct TruthOptions {
  std::string recording_id = "synth_0000";
  TimestampMs start_timestamp = 1700000000000;
  Geodetic origin{35.68 * M_PI / 180.0, 139.76 * M_PI / 180.0, 40.0};
  double heading = 0.0;         // rad, initial NED yaw
  double steering_ratio = 15.0;  // steering wheel angle / road wheel angle
  double wheelbase = 2.7;       // m
  bool with_camera = true;
  bool with_traffic_lights = true;
  bool with_lead_vehicle = true;
};

inline constexpr int kImuRateHz = 100;

struct GroundTruth {
  Vec3 origin_ecef = Vec3::Zero();
  /// Local north-east-down states at the frame times.
  std::vector<Vec3> position_ned;
  std::vector<Vec3> velocity_ned;
  std::vector<double> accel_long;  // held from this frame to the next
  std::vector<double> yaw_rate;
  std::vector<Pose> poses;  // ECEF, one per frame
  SensorLog log;            // noise-free streams
};

/// Integrates the profile with world acceleration held constant over each
/// frame interval, so positions follow velocities by the trapezoid rule.
GroundTruth gen_truth(const MotionProfile& profile, const TruthOptions& opts = {});

struct JumpInjection {
  double time = 0.0;          // s from recording start
  double displacement = 0.0;  // m, lateral (positive left), persists afterwards
};

struct VibrationInjection {
  double start = 0.0;  // s, inclusive
  double end = 0.0;    // s, inclusive
  double amplitude = 0.0;  // m
  double frequency = 10.0;  // Hz
};

struct CorruptionSpec {
  double gnss_sigma = 0.0;       // m
  double imu_accel_sigma = 0.0;  // m/s^2
  std::vector<std::pair<double, double>> gnss_dropout;  // [start, end] s, fixes invalid
  std::vector<JumpInjection> jumps;
  std::vector<VibrationInjection> vibrations;

  void validate() const;
};

struct FaultLabels {
  std::vector<std::int64_t> jump_frames;
  std::vector<std::int64_t> vibration_frames;
};

struct CorruptedLog {
  SensorLog log;
  FaultLabels labels;
};

/// Seeded Gaussian noise plus fault injection on the GNSS and IMU streams.
CorruptedLog corrupt(const GroundTruth& truth, const CorruptionSpec& spec, std::uint64_t seed);

struct CorpusSpec {
  std::size_t n_scenes = 20;
  std::map<ProfileKind, double> mix{{ProfileKind::straight, 0.4},
                                    {ProfileKind::constant_turn, 0.2},
                                    {ProfileKind::stop_and_go, 0.2},
                                    {ProfileKind::lane_change, 0.2}};
  double gnss_sigma = 0.02;
  double imu_accel_sigma = 0.02;
  double jump_fraction = 0.0;
  double vibration_fraction = 0.0;
  double jump_displacement = 5.0;
  double vibration_amplitude = 0.2;
  double vibration_frequency = 10.0;
  double duration = 33.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorpusScene {
  std::string recording_id;
  ProfileKind kind = ProfileKind::straight;
  FaultLabels labels;
  std::size_t cell = 0;  // sampler cell of the first 600 frames
};

/// Writes `<dir>/<recording_id>/` in the ingest layout plus `truth.jsonl`
/// (per-frame poses and faults) and `truth_meta.json`, and `<dir>/corpus.json`.
/// Deterministic for a given spec.
std::vector<CorpusScene> gen_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

/// Derived per-scene seed.
std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace vlagen
