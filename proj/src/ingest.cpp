#include "vlagen/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "json_util.hpp"
#include "vlagen/errors.hpp"

namespace vlagen {

namespace fs = std::filesystem;
using jsonu::json;
using jsonu::ordered_json;

const char* to_string(Gear g) {
  switch (g) {
    case Gear::park: return "park";
    case Gear::reverse: return "reverse";
    case Gear::neutral: return "neutral";
    case Gear::drive: return "drive";
    case Gear::low: return "low";
    case Gear::other: return "other";
  }
  return "other";
}

Gear gear_from_string(const std::string& s) {
  if (s == "park") return Gear::park;
  if (s == "reverse") return Gear::reverse;
  if (s == "neutral") return Gear::neutral;
  if (s == "drive") return Gear::drive;
  if (s == "low") return Gear::low;
  return Gear::other;
}

const char* to_string(LightState s) {
  switch (s) {
    case LightState::red: return "red";
    case LightState::yellow: return "yellow";
    case LightState::green: return "green";
    case LightState::red_with_arrow: return "red_with_arrow";
    case LightState::unknown: return "unknown";
  }
  return "unknown";
}

const char* to_string(ArrowDirection d) {
  switch (d) {
    case ArrowDirection::none: return "none";
    case ArrowDirection::left: return "left";
    case ArrowDirection::right: return "right";
    case ArrowDirection::straight: return "straight";
  }
  return "none";
}

const char* to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::car: return "car";
    case ObjectClass::truck: return "truck";
    case ObjectClass::bus: return "bus";
    case ObjectClass::motorcycle: return "motorcycle";
    case ObjectClass::bicycle: return "bicycle";
    case ObjectClass::pedestrian: return "pedestrian";
    case ObjectClass::other: return "other";
  }
  return "other";
}

bool is_vehicle(ObjectClass c) {
  return c == ObjectClass::car || c == ObjectClass::truck ||
         c == ObjectClass::bus || c == ObjectClass::motorcycle;
}

std::optional<LightState> light_from_string(const std::string& s) {
  for (auto v : {LightState::red, LightState::yellow, LightState::green,
                 LightState::red_with_arrow, LightState::unknown}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

std::optional<ArrowDirection> arrow_from_string(const std::string& s) {
  for (auto v : {ArrowDirection::none, ArrowDirection::left, ArrowDirection::right,
                 ArrowDirection::straight}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

namespace {

LightState parse_light(const std::string& s) {
  if (auto v = light_from_string(s)) return *v;
  throw jsonu::FieldError("unknown traffic light state '" + s + "'");
}

ArrowDirection parse_arrow(const std::string& s) {
  if (auto v = arrow_from_string(s)) return *v;
  throw jsonu::FieldError("unknown arrow direction '" + s + "'");
}

ObjectClass class_from_string(const std::string& s) {
  for (auto c : {ObjectClass::car, ObjectClass::truck, ObjectClass::bus,
                 ObjectClass::motorcycle, ObjectClass::bicycle,
                 ObjectClass::pedestrian}) {
    if (s == to_string(c)) return c;
  }
  return ObjectClass::other;
}

BoundingBox bbox_from_json(const json& obj) {
  const auto& v = jsonu::field(obj, "bbox");
  if (!v.is_array() || v.size() != 4) throw jsonu::FieldError("'bbox' needs 4 numbers");
  std::array<double, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) throw jsonu::FieldError("'bbox' has a non-numeric entry");
    b[i] = v[i].get<double>();
  }
  return {b[0], b[1], b[2], b[3]};
}

ordered_json bbox_to_json(const BoundingBox& b) {
  return ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

// --- per-stream codecs -----------------------------------------------------

CanFrame can_from_json(const json& j) {
  CanFrame c;
  c.timestamp = jsonu::integer(j, "timestamp");
  c.v_ego = jsonu::number(j, "v_ego");
  c.v_ego_raw = jsonu::number_or(j, "v_ego_raw", c.v_ego);
  c.a_ego = jsonu::number(j, "a_ego");
  c.steering_angle = jsonu::number(j, "steering_angle");
  c.steering_torque = jsonu::number_or(j, "steering_torque", 0.0);
  c.brake = jsonu::number_or(j, "brake", 0.0);
  c.brake_pressed = jsonu::boolean_or(j, "brake_pressed", false);
  c.gas = jsonu::number_or(j, "gas", 0.0);
  c.gas_pressed = jsonu::boolean_or(j, "gas_pressed", false);
  c.door_open = jsonu::boolean_or(j, "door_open", false);
  c.seatbelt_unlatched = jsonu::boolean_or(j, "seatbelt_unlatched", false);
  c.gear = gear_from_string(jsonu::string(j, "gear"));
  c.left_blinker = jsonu::boolean_or(j, "left_blinker", false);
  c.right_blinker = jsonu::boolean_or(j, "right_blinker", false);
  if (c.v_ego < 0.0) throw jsonu::FieldError("'v_ego' is negative");
  if (c.brake < 0.0 || c.brake > 1.0) throw jsonu::FieldError("'brake' outside [0,1]");
  if (c.gas < 0.0 || c.gas > 1.0) throw jsonu::FieldError("'gas' outside [0,1]");
  return c;
}

ordered_json to_json(const CanFrame& c) {
  ordered_json j;
  j["timestamp"] = c.timestamp;
  j["v_ego"] = c.v_ego;
  j["v_ego_raw"] = c.v_ego_raw;
  j["a_ego"] = c.a_ego;
  j["steering_angle"] = c.steering_angle;
  j["steering_torque"] = c.steering_torque;
  j["brake"] = c.brake;
  j["brake_pressed"] = c.brake_pressed;
  j["gas"] = c.gas;
  j["gas_pressed"] = c.gas_pressed;
  j["door_open"] = c.door_open;
  j["seatbelt_unlatched"] = c.seatbelt_unlatched;
  j["gear"] = to_string(c.gear);
  j["left_blinker"] = c.left_blinker;
  j["right_blinker"] = c.right_blinker;
  return j;
}

GnssFix gnss_from_json(const json& j) {
  GnssFix g;
  g.timestamp = jsonu::integer(j, "timestamp");
  g.position_ecef = jsonu::vec3_at(j, "position_ecef");
  g.fix_valid = jsonu::boolean_or(j, "fix_valid", true);
  return g;
}

ordered_json to_json(const GnssFix& g) {
  ordered_json j;
  j["timestamp"] = g.timestamp;
  j["position_ecef"] = jsonu::to_json(g.position_ecef);
  j["fix_valid"] = g.fix_valid;
  return j;
}

ImuSample imu_from_json(const json& j) {
  ImuSample s;
  s.timestamp = jsonu::integer(j, "timestamp");
  s.accel_device = jsonu::vec3_at(j, "accel_device");
  s.gyro_device = jsonu::vec3_at(j, "gyro_device");
  return s;
}

ordered_json to_json(const ImuSample& s) {
  ordered_json j;
  j["timestamp"] = s.timestamp;
  j["accel_device"] = jsonu::to_json(s.accel_device);
  j["gyro_device"] = jsonu::to_json(s.gyro_device);
  return j;
}

FrameIndex frame_from_json(const json& j) {
  FrameIndex f;
  f.frame_id = jsonu::integer(j, "frame_id");
  f.timestamp = jsonu::integer(j, "timestamp");
  f.image_path = jsonu::string(j, "image_path");
  if (f.frame_id < 0) throw jsonu::FieldError("'frame_id' is negative");
  return f;
}

ordered_json to_json(const FrameIndex& f) {
  ordered_json j;
  j["frame_id"] = f.frame_id;
  j["timestamp"] = f.timestamp;
  j["image_path"] = f.image_path;
  return j;
}

TrafficLightObs light_from_json(const json& j) {
  TrafficLightObs t;
  t.frame_id = jsonu::integer(j, "frame_id");
  t.state = parse_light(jsonu::string(j, "state"));
  t.arrow = j.contains("arrow") ? parse_arrow(jsonu::string(j, "arrow"))
                                : ArrowDirection::none;
  t.bbox = bbox_from_json(j);
  return t;
}

ordered_json to_json(const TrafficLightObs& t) {
  ordered_json j;
  j["frame_id"] = t.frame_id;
  j["state"] = to_string(t.state);
  j["arrow"] = to_string(t.arrow);
  j["bbox"] = bbox_to_json(t.bbox);
  return j;
}

RadarTarget radar_from_json(const json& j) {
  RadarTarget r;
  r.timestamp = jsonu::integer(j, "timestamp");
  r.range = jsonu::number(j, "range");
  r.range_rate = jsonu::number(j, "range_rate");
  r.azimuth = jsonu::number(j, "azimuth");
  if (!(r.range > 0.0)) throw jsonu::FieldError("'range' must be positive");
  return r;
}

ordered_json to_json(const RadarTarget& r) {
  ordered_json j;
  j["timestamp"] = r.timestamp;
  j["range"] = r.range;
  j["range_rate"] = r.range_rate;
  j["azimuth"] = r.azimuth;
  return j;
}

CameraBox box_from_json(const json& j) {
  CameraBox b;
  b.frame_id = jsonu::integer(j, "frame_id");
  b.bbox = bbox_from_json(j);
  b.object_class = class_from_string(jsonu::string(j, "class"));
  return b;
}

ordered_json to_json(const CameraBox& b) {
  ordered_json j;
  j["frame_id"] = b.frame_id;
  j["bbox"] = bbox_to_json(b.bbox);
  j["class"] = to_string(b.object_class);
  return j;
}

constexpr const char* kCalibKeys[] = {"orientations_calib", "orientations_ecef",
                                      "velocities_calib", "accelerations_calib",
                                      "angular_velocities_calib"};

std::optional<Vec3> CalibSample::*calib_member(int i) {
  static constexpr std::optional<Vec3> CalibSample::*kMembers[] = {
      &CalibSample::orientations_calib, &CalibSample::orientations_ecef,
      &CalibSample::velocities_calib, &CalibSample::accelerations_calib,
      &CalibSample::angular_velocities_calib};
  return kMembers[i];
}

CalibSample calib_from_json(const json& j) {
  CalibSample c;
  c.frame_id = jsonu::integer(j, "frame_id");
  for (int i = 0; i < 5; ++i) {
    if (j.contains(kCalibKeys[i]) && !j[kCalibKeys[i]].is_null()) {
      c.*calib_member(i) = jsonu::vec3_at(j, kCalibKeys[i]);
    }
  }
  return c;
}

ordered_json to_json(const CalibSample& c) {
  ordered_json j;
  j["frame_id"] = c.frame_id;
  for (int i = 0; i < 5; ++i) {
    const auto& v = c.*calib_member(i);
    if (v) j[kCalibKeys[i]] = jsonu::to_json(*v);
  }
  return j;
}

template <class T, class Parse>
std::vector<T> read_stream(const fs::path& path, const std::string& name,
                           Parse parse) {
  const std::string text = jsonu::read_file(path);
  const auto lines = jsonu::split_lines(text);
  std::vector<T> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw MalformedRecord(name, i + 1, e.what());
    } catch (const jsonu::FieldError& e) {
      throw MalformedRecord(name, i + 1, e.what());
    }
  }
  return out;
}

template <class T>
void write_stream(const std::vector<T>& items, const fs::path& path) {
  std::string text;
  for (const auto& item : items) text += jsonu::dump_line(to_json(item));
  jsonu::write_file_atomic(path, text);
}

template <class T>
void sort_by_time(std::vector<T>& v) {
  std::stable_sort(v.begin(), v.end(), [](const T& a, const T& b) {
    return a.timestamp < b.timestamp;
  });
}

template <class T>
void sort_by_frame(std::vector<T>& v) {
  std::stable_sort(v.begin(), v.end(), [](const T& a, const T& b) {
    return a.frame_id < b.frame_id;
  });
}

}  // namespace

SensorLog parse_log(const fs::path& dir, StreamCounts* counts) {
  auto require = [&](const char* name) {
    const fs::path p = dir / (std::string(name) + ".jsonl");
    if (!fs::is_regular_file(p)) throw MissingStream(name);
    return p;
  };
  auto optional_path = [&](const char* name) -> std::optional<fs::path> {
    const fs::path p = dir / (std::string(name) + ".jsonl");
    if (fs::is_regular_file(p)) return p;
    return std::nullopt;
  };

  SensorLog log;
  log.recording_id = dir.filename().string();
  if (log.recording_id.empty()) log.recording_id = dir.parent_path().filename().string();
  log.can = read_stream<CanFrame>(require("can"), "can", can_from_json);
  log.gnss = read_stream<GnssFix>(require("gnss"), "gnss", gnss_from_json);
  log.imu = read_stream<ImuSample>(require("imu"), "imu", imu_from_json);
  log.frames = read_stream<FrameIndex>(require("frames"), "frames", frame_from_json);
  if (auto p = optional_path("traffic_lights"))
    log.traffic_lights =
        read_stream<TrafficLightObs>(*p, "traffic_lights", light_from_json);
  if (auto p = optional_path("radar"))
    log.radar = read_stream<RadarTarget>(*p, "radar", radar_from_json);
  if (auto p = optional_path("boxes"))
    log.boxes = read_stream<CameraBox>(*p, "boxes", box_from_json);
  if (auto p = optional_path("calib"))
    log.calib = read_stream<CalibSample>(*p, "calib", calib_from_json);

  const fs::path cam_path = dir / "camera.json";
  if (fs::is_regular_file(cam_path)) {
    try {
      const json j = json::parse(jsonu::read_file(cam_path));
      CameraModel cam;
      cam.intrinsic = jsonu::matrix_from_json<Eigen::Matrix3d>(
          jsonu::field(j, "intrinsic_matrix"), "intrinsic_matrix");
      cam.extrinsic = jsonu::matrix_from_json<Eigen::Matrix4d>(
          jsonu::field(j, "extrinsic_matrix"), "extrinsic_matrix");
      log.camera = cam;
    } catch (const json::exception& e) {
      throw MalformedRecord("camera", 1, e.what());
    } catch (const jsonu::FieldError& e) {
      throw MalformedRecord("camera", 1, e.what());
    }
  }

  sort_by_time(log.can);
  sort_by_time(log.gnss);
  sort_by_time(log.imu);
  sort_by_time(log.radar);
  std::stable_sort(log.frames.begin(), log.frames.end(),
                   [](const FrameIndex& a, const FrameIndex& b) {
                     return a.timestamp < b.timestamp;
                   });
  sort_by_frame(log.traffic_lights);
  sort_by_frame(log.boxes);
  sort_by_frame(log.calib);

  if (counts) {
    *counts = {log.can.size(),   log.gnss.size(),           log.imu.size(),
               log.frames.size(), log.traffic_lights.size(), log.radar.size(),
               log.boxes.size(),  log.calib.size()};
  }
  return log;
}

void write_log(const SensorLog& log, const fs::path& dir) {
  fs::create_directories(dir);
  write_stream(log.can, dir / "can.jsonl");
  write_stream(log.gnss, dir / "gnss.jsonl");
  write_stream(log.imu, dir / "imu.jsonl");
  write_stream(log.frames, dir / "frames.jsonl");
  if (!log.traffic_lights.empty())
    write_stream(log.traffic_lights, dir / "traffic_lights.jsonl");
  if (!log.radar.empty()) write_stream(log.radar, dir / "radar.jsonl");
  if (!log.boxes.empty()) write_stream(log.boxes, dir / "boxes.jsonl");
  if (!log.calib.empty()) write_stream(log.calib, dir / "calib.jsonl");
  if (log.camera) {
    ordered_json j;
    j["intrinsic_matrix"] = jsonu::matrix_to_json<ordered_json>(log.camera->intrinsic);
    j["extrinsic_matrix"] = jsonu::matrix_to_json<ordered_json>(log.camera->extrinsic);
    jsonu::write_file_atomic(dir / "camera.json", j.dump(2) + "\n");
  }
}

// --- alignment -------------------------------------------------------------

std::optional<TrafficLightObs> AlignedFrame::primary_light() const {
  if (traffic_lights.empty()) return std::nullopt;
  return *std::max_element(
      traffic_lights.begin(), traffic_lights.end(),
      [](const TrafficLightObs& a, const TrafficLightObs& b) {
        return a.bbox.area() < b.bbox.area();
      });
}

namespace {

// Index of the sample nearest to t within `window` ms; ties go to the earlier.
template <class T>
std::optional<std::size_t> nearest(const std::vector<T>& v, TimestampMs t,
                                   TimestampMs window) {
  auto it = std::lower_bound(v.begin(), v.end(), t, [](const T& s, TimestampMs x) {
    return s.timestamp < x;
  });
  std::optional<std::size_t> best;
  TimestampMs best_dist = window + 1;
  if (it != v.begin()) {
    auto prev = std::prev(it);
    const TimestampMs d = t - prev->timestamp;
    if (d <= window) {
      best = static_cast<std::size_t>(prev - v.begin());
      best_dist = d;
    }
  }
  if (it != v.end()) {
    const TimestampMs d = it->timestamp - t;
    if (d <= window && d < best_dist) best = static_cast<std::size_t>(it - v.begin());
  }
  return best;
}

template <class T>
std::vector<T> with_frame_id(const std::vector<T>& v, std::int64_t id) {
  auto lo = std::lower_bound(v.begin(), v.end(), id, [](const T& s, std::int64_t x) {
    return s.frame_id < x;
  });
  std::vector<T> out;
  for (auto it = lo; it != v.end() && it->frame_id == id; ++it) out.push_back(*it);
  return out;
}

}  // namespace

std::vector<AlignedFrame> align_to_frames(const SensorLog& log) {
  std::vector<GnssFix> fixes;
  std::copy_if(log.gnss.begin(), log.gnss.end(), std::back_inserter(fixes),
               [](const GnssFix& g) { return g.fix_valid; });

  // Radar scans: distinct timestamps, each a group of targets.
  std::vector<RadarTarget> scan_heads;
  for (const auto& r : log.radar) {
    if (scan_heads.empty() || scan_heads.back().timestamp != r.timestamp)
      scan_heads.push_back(r);
  }

  std::vector<AlignedFrame> out;
  out.reserve(log.frames.size());
  for (const auto& f : log.frames) {
    AlignedFrame a;
    a.frame = f;
    const TimestampMs t = f.timestamp;
    if (auto i = nearest(log.can, t, kNearestMatchWindowMs)) a.can = log.can[*i];
    if (auto i = nearest(log.imu, t, kNearestMatchWindowMs)) a.imu = log.imu[*i];

    auto hi = std::lower_bound(fixes.begin(), fixes.end(), t,
                               [](const GnssFix& g, TimestampMs x) {
                                 return g.timestamp < x;
                               });
    if (hi != fixes.end() && hi->timestamp == t) {
      a.gnss = *hi;
      a.gnss_available = true;
      a.gnss_bracket = {*hi};
    } else if (hi != fixes.begin() && hi != fixes.end()) {
      const GnssFix& lo = *std::prev(hi);
      const double alpha = static_cast<double>(t - lo.timestamp) /
                           static_cast<double>(hi->timestamp - lo.timestamp);
      GnssFix g;
      g.timestamp = t;
      g.fix_valid = true;
      g.position_ecef = lo.position_ecef + alpha * (hi->position_ecef - lo.position_ecef);
      a.gnss = g;
      a.gnss_available = hi->timestamp - lo.timestamp <= kGnssGapLimitMs;
      a.gnss_bracket = {lo, *hi};
    }

    if (auto i = nearest(scan_heads, t, kNearestMatchWindowMs)) {
      const TimestampMs scan_t = scan_heads[*i].timestamp;
      for (const auto& r : log.radar)
        if (r.timestamp == scan_t) a.radar.push_back(r);
    }
    a.traffic_lights = with_frame_id(log.traffic_lights, f.frame_id);
    a.boxes = with_frame_id(log.boxes, f.frame_id);
    auto calib = with_frame_id(log.calib, f.frame_id);
    if (!calib.empty()) a.calib = calib.front();
    out.push_back(std::move(a));
  }
  return out;
}

SensorLog to_log(const std::vector<AlignedFrame>& frames) {
  SensorLog log;
  auto add_unique = [](auto& vec, const auto& item) {
    if (std::find(vec.begin(), vec.end(), item) == vec.end()) vec.push_back(item);
  };
  for (const auto& a : frames) {
    log.frames.push_back(a.frame);
    if (a.can) add_unique(log.can, *a.can);
    if (a.imu) add_unique(log.imu, *a.imu);
    for (const auto& g : a.gnss_bracket) add_unique(log.gnss, g);
    for (const auto& r : a.radar) add_unique(log.radar, r);
    for (const auto& t : a.traffic_lights) log.traffic_lights.push_back(t);
    for (const auto& b : a.boxes) log.boxes.push_back(b);
    if (a.calib) log.calib.push_back(*a.calib);
  }
  sort_by_time(log.can);
  sort_by_time(log.imu);
  sort_by_time(log.gnss);
  sort_by_time(log.radar);
  return log;
}

// --- lead vehicle ------------------------------------------------------------

std::optional<LeadVehicleObs> select_lead_vehicle(
    const std::vector<RadarTarget>& radar, const std::vector<CameraBox>& boxes,
    const AlignedFrame& frame, const CameraModel& cam, const FusionConfig& cfg) {
  const double ego_speed = frame.can ? frame.can->v_ego : 0.0;
  std::optional<LeadVehicleObs> best;
  for (const auto& target : radar) {
    const double lon = target.range * std::cos(target.azimuth);
    const double lat = target.range * std::sin(target.azimuth);
    if (!(lon > 0.0) || std::abs(lat) > cfg.lane_half_width) continue;
    const auto px = project_to_image(Vec3(lon, lat, cfg.target_height), cam);
    if (!px) continue;
    const bool associated =
        std::any_of(boxes.begin(), boxes.end(), [&](const CameraBox& b) {
          return is_vehicle(b.object_class) && b.bbox.contains(px->x(), px->y());
        });
    if (!associated) continue;
    if (!best || lon < best->longitudinal) {
      best = LeadVehicleObs{frame.frame.frame_id, lon, lat,
                            ego_speed + target.range_rate, 0.0};
    }
  }
  return best;
}

std::vector<std::optional<LeadVehicleObs>> lead_vehicle_stream(
    const std::vector<AlignedFrame>& frames, const CameraModel& cam,
    const FusionConfig& cfg) {
  std::vector<std::optional<LeadVehicleObs>> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto lead = select_lead_vehicle(frames[i].radar, frames[i].boxes, frames[i], cam, cfg);
    if (lead && i > 0 && out.back()) {
      const double dt =
          static_cast<double>(frames[i].frame.timestamp - frames[i - 1].frame.timestamp) /
          1000.0;
      if (dt > 0.0) lead->accel = (lead->speed - out.back()->speed) / dt;
    }
    out.push_back(lead);
  }
  return out;
}

}  // namespace vlagen
