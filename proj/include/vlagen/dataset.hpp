#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlagen/captioning.hpp"
#include "vlagen/estimation.hpp"
#include "vlagen/ingest.hpp"
#include "vlagen/sampler.hpp"

namespace vlagen {

/// Traffic light state carried on a record (extension key `traffic_light`).
struct RecordLight {
  LightState state = LightState::unknown;
  ArrowDirection arrow = ArrowDirection::none;

  bool operator==(const RecordLight&) const = default;
};

/// One dataset row. Member names follow the released key names.
struct FrameRecord {
  std::int64_t frame_id = 0;
  std::string image_path;
  double vEgo = 0.0;
  double vEgoRaw = 0.0;
  double aEgo = 0.0;
  double steeringAngleDeg = 0.0;
  double steeringTorque = 0.0;
  double brake = 0.0;
  bool brakePressed = false;
  double gas = 0.0;
  bool gasPressed = false;
  bool doorOpen = false;
  bool seatbeltUnlatched = false;
  std::string gearShifter = "drive";
  bool leftBlinker = false;
  bool rightBlinker = false;
  std::optional<Vec3> orientations_calib;
  std::optional<Vec3> orientations_ecef;
  Vec3 orientations_ned = Vec3::Zero();  // roll, pitch, yaw
  Vec3 positions_ecef = Vec3::Zero();
  std::optional<Vec3> velocities_calib;
  Vec3 velocities_ecef = Vec3::Zero();
  std::optional<Vec3> accelerations_calib;
  std::optional<Vec3> accelerations_device;
  std::optional<Vec3> angular_velocities_calib;
  std::optional<Vec3> angular_velocities_device;
  TimestampMs timestamp = 0;
  std::optional<Eigen::Matrix4d> extrinsic_matrix;
  std::optional<Eigen::Matrix3d> intrinsic_matrix;
  int trajectory_count = 0;
  std::vector<Vec3> trajectory;
  std::string caption;
  // Extensions beyond the released schema, used for corpus statistics.
  std::optional<RecordLight> traffic_light;
  std::optional<LeadVehicleObs> lead_vehicle;

  bool operator==(const FrameRecord&) const = default;
};

/// Key order of the emitted JSON objects.
const std::vector<std::string>& record_keys();

/// Throws FrameMismatch when the pose timestamp differs from the frame's, and
/// DataError when the frame has no CAN sample.
FrameRecord assemble_record(const AlignedFrame& frame, const Pose& pose,
                            const EgoTrajectory& traj, const std::string& caption,
                            const std::optional<CameraModel>& cam,
                            const std::optional<LeadVehicleObs>& lead = std::nullopt);

std::string record_to_line(const FrameRecord& r);
/// Throws SchemaViolation(line_no) for missing keys or wrong types.
FrameRecord record_from_line(const std::string& line, std::size_t line_no = 1);

/// One JSON object per line, written atomically.
void emit_jsonl(const std::vector<FrameRecord>& records, const std::filesystem::path& path);
std::vector<FrameRecord> read_jsonl(const std::filesystem::path& path);

inline constexpr double kFramesPerHour = kFrameRateHz * 3600.0;

double frames_to_hours(std::int64_t frames);

struct DatasetStats {
  Histogram speed_kmh;
  Histogram abs_steering_deg;
  double blinker_fraction = 0.0;
  double traffic_light_fraction = 0.0;
  std::int64_t blinker_frames = 0;
  std::int64_t traffic_light_frames = 0;
  std::int64_t scene_count = 0;
  std::int64_t frame_count = 0;
  double hours = 0.0;
  bool empty = true;

  std::string to_json() const;
};

DatasetStats compute_stats(const std::vector<FrameRecord>& records, std::int64_t scene_count,
                           const BinningConfig& bins = {});

struct OverlayPoint {
  int index = 0;  // trajectory point index
  double u = 0.0;
  double v = 0.0;
};

/// Projected trajectory points in time order; points too close to or behind
/// the camera are dropped. Throws MissingCamera.
std::vector<OverlayPoint> overlay_geometry(const FrameRecord& record);

/// Rows `frame_id,u,v` with a header line.
std::string overlay_csv(const std::vector<FrameRecord>& records);

struct SceneVerdicts {
  bool flagged = false;
  int jump_frames = 0;
  int vibration_frames = 0;

  bool operator==(const SceneVerdicts&) const = default;
};

struct SceneManifest {
  std::string scene_id;
  std::string recording_id;
  std::int64_t start_frame = 0;
  int span = kSceneFrames;
  bool eligible = false;
  SceneVerdicts verdicts;
  SceneFeatures features;
  double weight = 0.0;
  std::vector<CaptionWindow> windows;
};

std::string manifest_to_line(const SceneManifest& m);
SceneManifest manifest_from_line(const std::string& line, std::size_t line_no = 1);
void write_manifest(const std::vector<SceneManifest>& scenes, const std::filesystem::path& path);
std::vector<SceneManifest> read_manifest(const std::filesystem::path& path);

}  // namespace vlagen
