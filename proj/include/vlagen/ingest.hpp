#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlagen/geodesy.hpp"

namespace vlagen {

inline constexpr double kFrameRateHz = 20.0;
inline constexpr TimestampMs kFramePeriodMs = 50;
inline constexpr int kImageWidth = 1928;
inline constexpr int kImageHeight = 1208;

enum class Gear { park, reverse, neutral, drive, low, other };

const char* to_string(Gear g);
Gear gear_from_string(const std::string& s);  // unknown codes -> Gear::other

struct CanFrame {
  TimestampMs timestamp = 0;
  double v_ego = 0.0;      // m/s
  double v_ego_raw = 0.0;  // m/s
  double a_ego = 0.0;      // m/s^2
  double steering_angle = 0.0;  // deg
  double steering_torque = 0.0;
  double brake = 0.0;
  bool brake_pressed = false;
  double gas = 0.0;
  bool gas_pressed = false;
  bool door_open = false;
  bool seatbelt_unlatched = false;
  Gear gear = Gear::drive;
  bool left_blinker = false;
  bool right_blinker = false;

  bool operator==(const CanFrame&) const = default;
};

struct GnssFix {
  TimestampMs timestamp = 0;
  Vec3 position_ecef = Vec3::Zero();
  bool fix_valid = true;

  bool operator==(const GnssFix&) const = default;
};

struct ImuSample {
  TimestampMs timestamp = 0;
  Vec3 accel_device = Vec3::Zero();  // m/s^2, forward-left-up, gravity removed
  Vec3 gyro_device = Vec3::Zero();   // rad/s, forward-left-up

  bool operator==(const ImuSample&) const = default;
};

struct FrameIndex {
  std::int64_t frame_id = 0;
  TimestampMs timestamp = 0;
  std::string image_path;

  bool operator==(const FrameIndex&) const = default;
};

/// Pixel rectangle [x_min, y_min, x_max, y_max].
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(double u, double v) const {
    return u >= x_min && u <= x_max && v >= y_min && v <= y_max;
  }
  double area() const { return (x_max - x_min) * (y_max - y_min); }
  bool operator==(const BoundingBox&) const = default;
};

enum class LightState { red, yellow, green, red_with_arrow, unknown };
enum class ArrowDirection { none, left, right, straight };

const char* to_string(LightState s);
const char* to_string(ArrowDirection d);
std::optional<LightState> light_from_string(const std::string& s);
std::optional<ArrowDirection> arrow_from_string(const std::string& s);

struct TrafficLightObs {
  std::int64_t frame_id = 0;
  LightState state = LightState::unknown;
  ArrowDirection arrow = ArrowDirection::none;
  BoundingBox bbox;

  bool operator==(const TrafficLightObs&) const = default;
};

struct LeadVehicleObs {
  std::int64_t frame_id = 0;
  double longitudinal = 0.0;  // m ahead
  double lateral = 0.0;       // m, positive left
  double speed = 0.0;         // m/s
  double accel = 0.0;         // m/s^2

  bool operator==(const LeadVehicleObs&) const = default;
};

struct RadarTarget {
  TimestampMs timestamp = 0;
  double range = 0.0;       // m
  double range_rate = 0.0;  // m/s
  double azimuth = 0.0;     // rad, positive left

  bool operator==(const RadarTarget&) const = default;
};

enum class ObjectClass { car, truck, bus, motorcycle, bicycle, pedestrian, other };

const char* to_string(ObjectClass c);
bool is_vehicle(ObjectClass c);

struct CameraBox {
  std::int64_t frame_id = 0;
  BoundingBox bbox;
  ObjectClass object_class = ObjectClass::car;

  bool operator==(const CameraBox&) const = default;
};

/// Calibrated-frame quantities carried through to the dataset unchanged.
struct CalibSample {
  std::int64_t frame_id = 0;
  std::optional<Vec3> orientations_calib;
  std::optional<Vec3> orientations_ecef;
  std::optional<Vec3> velocities_calib;
  std::optional<Vec3> accelerations_calib;
  std::optional<Vec3> angular_velocities_calib;

  bool operator==(const CalibSample&) const = default;
};

struct SensorLog {
  std::string recording_id;
  std::vector<CanFrame> can;
  std::vector<GnssFix> gnss;
  std::vector<ImuSample> imu;
  std::vector<FrameIndex> frames;
  std::vector<TrafficLightObs> traffic_lights;
  std::vector<RadarTarget> radar;
  std::vector<CameraBox> boxes;
  std::vector<CalibSample> calib;
  std::optional<CameraModel> camera;
};

/// Per-stream record counts reported by parse_log.
struct StreamCounts {
  std::size_t can = 0, gnss = 0, imu = 0, frames = 0;
  std::size_t traffic_lights = 0, radar = 0, boxes = 0, calib = 0;
};

/// Reads `<dir>/{can,gnss,imu,frames}.jsonl` (required) and the optional
/// detection, calibration and camera files. Streams come back time-sorted.
SensorLog parse_log(const std::filesystem::path& dir,
                    StreamCounts* counts = nullptr);

/// Writes the same layout parse_log reads.
void write_log(const SensorLog& log, const std::filesystem::path& dir);

inline constexpr TimestampMs kNearestMatchWindowMs = 100;
inline constexpr TimestampMs kGnssGapLimitMs = 1000;

struct AlignedFrame {
  FrameIndex frame;
  std::optional<CanFrame> can;
  std::optional<ImuSample> imu;
  std::optional<GnssFix> gnss;  // interpolated at the frame timestamp
  bool gnss_available = false;
  /// The raw valid fixes the interpolation used (one on an exact hit).
  std::vector<GnssFix> gnss_bracket;
  std::vector<TrafficLightObs> traffic_lights;
  std::vector<RadarTarget> radar;
  std::vector<CameraBox> boxes;
  std::optional<CalibSample> calib;

  /// The largest detected traffic light, if any.
  std::optional<TrafficLightObs> primary_light() const;
};

/// One AlignedFrame per FrameIndex. CAN and IMU are nearest-matched within
/// 100 ms. GNSS is linearly interpolated between the bracketing valid fixes
/// and flagged unavailable across gaps longer than 1 s.
std::vector<AlignedFrame> align_to_frames(const SensorLog& log);

/// Rebuilds a log from aligned frames; align_to_frames of the result
/// reproduces its input.
SensorLog to_log(const std::vector<AlignedFrame>& frames);

struct FusionConfig {
  double lane_half_width = 1.8;  // m
  double target_height = 0.8;    // m, assumed radar return height above ground
};

std::optional<LeadVehicleObs> select_lead_vehicle(
    const std::vector<RadarTarget>& radar, const std::vector<CameraBox>& boxes,
    const AlignedFrame& frame, const CameraModel& cam,
    const FusionConfig& cfg = {});

/// Lead vehicle per frame with acceleration filled in by finite differences
/// of consecutive lead speeds.
std::vector<std::optional<LeadVehicleObs>> lead_vehicle_stream(
    const std::vector<AlignedFrame>& frames, const CameraModel& cam,
    const FusionConfig& cfg = {});

}  // namespace vlagen
