#include "vlagen/dataset.hpp"

#include <sstream>

#include "json_util.hpp"
#include "vlagen/errors.hpp"

namespace vlagen {

namespace fs = std::filesystem;
using jsonu::json;
using jsonu::ordered_json;

const std::vector<std::string>& record_keys() {
  static const std::vector<std::string> kKeys{
      "frame_id", "image_path", "vEgo", "vEgoRaw", "aEgo", "steeringAngleDeg",
      "steeringTorque", "brake", "brakePressed", "gas", "gasPressed", "doorOpen",
      "seatbeltUnlatched", "gearShifter", "leftBlinker", "rightBlinker",
      "orientations_calib", "orientations_ecef", "orientations_ned", "positions_ecef",
      "velocities_calib", "velocities_ecef", "accelerations_calib", "accelerations_device",
      "angular_velocities_calib", "angular_velocities_device", "timestamp",
      "extrinsic_matrix", "intrinsic_matrix", "trajectory_count", "trajectory", "caption",
      "traffic_light", "lead_vehicle"};
  return kKeys;
}

FrameRecord assemble_record(const AlignedFrame& frame, const Pose& pose,
                            const EgoTrajectory& traj, const std::string& caption,
                            const std::optional<CameraModel>& cam,
                            const std::optional<LeadVehicleObs>& lead) {
  if (pose.timestamp != frame.frame.timestamp) {
    throw FrameMismatch("pose at " + std::to_string(pose.timestamp) + " ms given for frame " +
                        std::to_string(frame.frame.frame_id) + " at " +
                        std::to_string(frame.frame.timestamp) + " ms");
  }
  if (lead && lead->frame_id != frame.frame.frame_id) {
    throw FrameMismatch("lead vehicle belongs to frame " + std::to_string(lead->frame_id));
  }
  if (!frame.can) {
    throw DataError("frame " + std::to_string(frame.frame.frame_id) + " has no CAN sample");
  }
  const CanFrame& c = *frame.can;
  FrameRecord r;
  r.frame_id = frame.frame.frame_id;
  r.image_path = frame.frame.image_path;
  r.vEgo = c.v_ego;
  r.vEgoRaw = c.v_ego_raw;
  r.aEgo = c.a_ego;
  r.steeringAngleDeg = c.steering_angle;
  r.steeringTorque = c.steering_torque;
  r.brake = c.brake;
  r.brakePressed = c.brake_pressed;
  r.gas = c.gas;
  r.gasPressed = c.gas_pressed;
  r.doorOpen = c.door_open;
  r.seatbeltUnlatched = c.seatbelt_unlatched;
  r.gearShifter = to_string(c.gear);
  r.leftBlinker = c.left_blinker;
  r.rightBlinker = c.right_blinker;
  if (frame.calib) {
    r.orientations_calib = frame.calib->orientations_calib;
    r.orientations_ecef = frame.calib->orientations_ecef;
    r.velocities_calib = frame.calib->velocities_calib;
    r.accelerations_calib = frame.calib->accelerations_calib;
    r.angular_velocities_calib = frame.calib->angular_velocities_calib;
  }
  const auto& o = pose.orientation_ned;
  r.orientations_ned = Vec3(o.roll, o.pitch, o.yaw);
  r.positions_ecef = pose.position_ecef;
  r.velocities_ecef = pose.velocity_ecef;
  if (frame.imu) {
    r.accelerations_device = frame.imu->accel_device;
    r.angular_velocities_device = frame.imu->gyro_device;
  }
  r.timestamp = frame.frame.timestamp;
  if (cam) {
    r.extrinsic_matrix = cam->extrinsic;
    r.intrinsic_matrix = cam->intrinsic;
  }
  r.trajectory = traj.points;
  r.trajectory_count = traj.trajectory_count();
  r.caption = caption;
  if (auto light = frame.primary_light()) r.traffic_light = RecordLight{light->state, light->arrow};
  r.lead_vehicle = lead;
  return r;
}

namespace {

template <class T>
ordered_json opt_vec(const std::optional<T>& v) {
  return v ? jsonu::to_json(*v) : ordered_json(nullptr);
}

template <class M>
ordered_json opt_matrix(const std::optional<M>& m) {
  return m ? jsonu::matrix_to_json<ordered_json>(*m) : ordered_json(nullptr);
}

std::optional<Vec3> read_opt_vec(const json& j, const char* key) {
  const auto& v = jsonu::field(j, key);
  if (v.is_null()) return std::nullopt;
  return jsonu::vec3(v, key);
}

template <class M>
std::optional<M> read_opt_matrix(const json& j, const char* key) {
  const auto& v = jsonu::field(j, key);
  if (v.is_null()) return std::nullopt;
  return jsonu::matrix_from_json<M>(v, key);
}

}  // namespace

std::string record_to_line(const FrameRecord& r) {
  ordered_json j;
  j["frame_id"] = r.frame_id;
  j["image_path"] = r.image_path;
  j["vEgo"] = r.vEgo;
  j["vEgoRaw"] = r.vEgoRaw;
  j["aEgo"] = r.aEgo;
  j["steeringAngleDeg"] = r.steeringAngleDeg;
  j["steeringTorque"] = r.steeringTorque;
  j["brake"] = r.brake;
  j["brakePressed"] = r.brakePressed;
  j["gas"] = r.gas;
  j["gasPressed"] = r.gasPressed;
  j["doorOpen"] = r.doorOpen;
  j["seatbeltUnlatched"] = r.seatbeltUnlatched;
  j["gearShifter"] = r.gearShifter;
  j["leftBlinker"] = r.leftBlinker;
  j["rightBlinker"] = r.rightBlinker;
  j["orientations_calib"] = opt_vec(r.orientations_calib);
  j["orientations_ecef"] = opt_vec(r.orientations_ecef);
  j["orientations_ned"] = jsonu::to_json(r.orientations_ned);
  j["positions_ecef"] = jsonu::to_json(r.positions_ecef);
  j["velocities_calib"] = opt_vec(r.velocities_calib);
  j["velocities_ecef"] = jsonu::to_json(r.velocities_ecef);
  j["accelerations_calib"] = opt_vec(r.accelerations_calib);
  j["accelerations_device"] = opt_vec(r.accelerations_device);
  j["angular_velocities_calib"] = opt_vec(r.angular_velocities_calib);
  j["angular_velocities_device"] = opt_vec(r.angular_velocities_device);
  j["timestamp"] = r.timestamp;
  j["extrinsic_matrix"] = opt_matrix(r.extrinsic_matrix);
  j["intrinsic_matrix"] = opt_matrix(r.intrinsic_matrix);
  j["trajectory_count"] = r.trajectory_count;
  ordered_json traj = ordered_json::array();
  for (const auto& p : r.trajectory) traj.push_back(jsonu::to_json(p));
  j["trajectory"] = std::move(traj);
  j["caption"] = r.caption;
  if (r.traffic_light) {
    j["traffic_light"] = {{"state", to_string(r.traffic_light->state)},
                          {"arrow", to_string(r.traffic_light->arrow)}};
  } else {
    j["traffic_light"] = nullptr;
  }
  if (r.lead_vehicle) {
    j["lead_vehicle"] = {{"longitudinal", r.lead_vehicle->longitudinal},
                         {"lateral", r.lead_vehicle->lateral},
                         {"speed", r.lead_vehicle->speed},
                         {"accel", r.lead_vehicle->accel}};
  } else {
    j["lead_vehicle"] = nullptr;
  }
  return jsonu::dump_line(j);
}

FrameRecord record_from_line(const std::string& line, std::size_t line_no) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw SchemaViolation(line_no, "not valid JSON");
  FrameRecord r;
  try {
    r.frame_id = jsonu::integer(j, "frame_id");
    r.image_path = jsonu::string(j, "image_path");
    r.vEgo = jsonu::number(j, "vEgo");
    r.vEgoRaw = jsonu::number(j, "vEgoRaw");
    r.aEgo = jsonu::number(j, "aEgo");
    r.steeringAngleDeg = jsonu::number(j, "steeringAngleDeg");
    r.steeringTorque = jsonu::number(j, "steeringTorque");
    r.brake = jsonu::number(j, "brake");
    r.brakePressed = jsonu::boolean(j, "brakePressed");
    r.gas = jsonu::number(j, "gas");
    r.gasPressed = jsonu::boolean(j, "gasPressed");
    r.doorOpen = jsonu::boolean(j, "doorOpen");
    r.seatbeltUnlatched = jsonu::boolean(j, "seatbeltUnlatched");
    r.gearShifter = jsonu::string(j, "gearShifter");
    r.leftBlinker = jsonu::boolean(j, "leftBlinker");
    r.rightBlinker = jsonu::boolean(j, "rightBlinker");
    r.orientations_calib = read_opt_vec(j, "orientations_calib");
    r.orientations_ecef = read_opt_vec(j, "orientations_ecef");
    r.orientations_ned = jsonu::vec3_at(j, "orientations_ned");
    r.positions_ecef = jsonu::vec3_at(j, "positions_ecef");
    r.velocities_calib = read_opt_vec(j, "velocities_calib");
    r.velocities_ecef = jsonu::vec3_at(j, "velocities_ecef");
    r.accelerations_calib = read_opt_vec(j, "accelerations_calib");
    r.accelerations_device = read_opt_vec(j, "accelerations_device");
    r.angular_velocities_calib = read_opt_vec(j, "angular_velocities_calib");
    r.angular_velocities_device = read_opt_vec(j, "angular_velocities_device");
    r.timestamp = jsonu::integer(j, "timestamp");
    r.extrinsic_matrix = read_opt_matrix<Eigen::Matrix4d>(j, "extrinsic_matrix");
    r.intrinsic_matrix = read_opt_matrix<Eigen::Matrix3d>(j, "intrinsic_matrix");
    r.trajectory_count = static_cast<int>(jsonu::integer(j, "trajectory_count"));
    const auto& traj = jsonu::field(j, "trajectory");
    if (!traj.is_array()) throw jsonu::FieldError("'trajectory' is not an array");
    for (const auto& p : traj) r.trajectory.push_back(jsonu::vec3(p, "trajectory"));
    r.caption = jsonu::string(j, "caption");

    if (auto it = j.find("traffic_light"); it != j.end() && !it->is_null()) {
      const auto state = light_from_string(jsonu::string(*it, "state"));
      const auto arrow = arrow_from_string(jsonu::string(*it, "arrow"));
      if (!state || !arrow) throw jsonu::FieldError("bad 'traffic_light' value");
      r.traffic_light = RecordLight{*state, *arrow};
    }
    if (auto it = j.find("lead_vehicle"); it != j.end() && !it->is_null()) {
      LeadVehicleObs lead;
      lead.frame_id = r.frame_id;
      lead.longitudinal = jsonu::number(*it, "longitudinal");
      lead.lateral = jsonu::number(*it, "lateral");
      lead.speed = jsonu::number(*it, "speed");
      lead.accel = jsonu::number(*it, "accel");
      r.lead_vehicle = lead;
    }
  } catch (const jsonu::FieldError& e) {
    throw SchemaViolation(line_no, e.what());
  }
  if (r.trajectory_count != static_cast<int>(r.trajectory.size()) ||
      r.trajectory_count > kTrajectoryLength || r.trajectory_count < 0) {
    throw SchemaViolation(line_no, "trajectory_count " + std::to_string(r.trajectory_count) +
                                       " does not match " + std::to_string(r.trajectory.size()) +
                                       " trajectory rows");
  }
  return r;
}

void emit_jsonl(const std::vector<FrameRecord>& records, const fs::path& path) {
  std::string out;
  for (const auto& r : records) out += record_to_line(r);
  jsonu::write_file_atomic(path, out);
}

std::vector<FrameRecord> read_jsonl(const fs::path& path) {
  std::vector<FrameRecord> out;
  const auto lines = jsonu::split_lines(jsonu::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(record_from_line(lines[i], i + 1));
  }
  return out;
}

double frames_to_hours(std::int64_t frames) {
  return static_cast<double>(frames) / kFramesPerHour;
}

DatasetStats compute_stats(const std::vector<FrameRecord>& records, std::int64_t scene_count,
                           const BinningConfig& bins) {
  DatasetStats s;
  std::vector<double> speeds, steering;
  speeds.reserve(records.size());
  steering.reserve(records.size());
  for (const auto& r : records) {
    speeds.push_back(r.vEgo * 3.6);
    steering.push_back(std::abs(r.steeringAngleDeg));
    if (r.leftBlinker || r.rightBlinker) ++s.blinker_frames;
    if (r.traffic_light) ++s.traffic_light_frames;
  }
  s.speed_kmh = make_histogram(speeds, kSpeedEdgesKmh);
  s.abs_steering_deg = make_histogram(steering, bins.steering_edges);
  s.frame_count = static_cast<std::int64_t>(records.size());
  s.scene_count = scene_count;
  s.hours = frames_to_hours(s.frame_count);
  s.empty = records.empty();
  if (!s.empty) {
    s.blinker_fraction = static_cast<double>(s.blinker_frames) / static_cast<double>(s.frame_count);
    s.traffic_light_fraction =
        static_cast<double>(s.traffic_light_frames) / static_cast<double>(s.frame_count);
  }
  return s;
}

namespace {

ordered_json histogram_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}, {"entropy", h.entropy}, {"valid", h.valid}};
}

}  // namespace

std::string DatasetStats::to_json() const {
  ordered_json j;
  j["scene_count"] = scene_count;
  j["frame_count"] = frame_count;
  j["hours"] = hours;
  j["empty"] = empty;
  j["blinker_frames"] = blinker_frames;
  j["blinker_fraction"] = blinker_fraction;
  j["traffic_light_frames"] = traffic_light_frames;
  j["traffic_light_fraction"] = traffic_light_fraction;
  j["speed_kmh"] = histogram_json(speed_kmh);
  j["abs_steering_deg"] = histogram_json(abs_steering_deg);
  return j.dump(2) + "\n";
}

std::vector<OverlayPoint> overlay_geometry(const FrameRecord& record) {
  if (!record.extrinsic_matrix || !record.intrinsic_matrix) {
    throw MissingCamera("frame " + std::to_string(record.frame_id) + " has no camera matrices");
  }
  CameraModel cam{*record.intrinsic_matrix, *record.extrinsic_matrix};
  std::vector<OverlayPoint> out;
  for (std::size_t i = 0; i < record.trajectory.size(); ++i) {
    if (auto px = project_to_image(record.trajectory[i], cam)) {
      out.push_back({static_cast<int>(i), px->x(), px->y()});
    }
  }
  return out;
}

std::string overlay_csv(const std::vector<FrameRecord>& records) {
  std::ostringstream out;
  out.precision(17);
  out << "frame_id,u,v\n";
  for (const auto& r : records) {
    for (const auto& p : overlay_geometry(r)) out << r.frame_id << ',' << p.u << ',' << p.v << '\n';
  }
  return out.str();
}

std::string manifest_to_line(const SceneManifest& m) {
  ordered_json j;
  j["scene_id"] = m.scene_id;
  j["recording_id"] = m.recording_id;
  j["start_frame"] = m.start_frame;
  j["span"] = m.span;
  j["eligible"] = m.eligible;
  j["verdicts"] = {{"flagged", m.verdicts.flagged},
                   {"jump_frames", m.verdicts.jump_frames},
                   {"vibration_frames", m.verdicts.vibration_frames}};
  const auto& f = m.features;
  j["features"] = {{"max_abs_steering", f.max_abs_steering},
                   {"max_abs_accel", f.max_abs_accel},
                   {"turn_signal_used", f.turn_signal_used},
                   {"left_signal_frames", f.left_signal_frames},
                   {"right_signal_frames", f.right_signal_frames},
                   {"max_speed", f.max_speed}};
  j["weight"] = m.weight;
  ordered_json windows = ordered_json::array();
  for (const auto& w : m.windows) {
    windows.push_back({{"window_index", w.window_index},
                       {"start", w.start},
                       {"end", w.end},
                       {"representatives", w.representatives}});
  }
  j["windows"] = std::move(windows);
  return jsonu::dump_line(j);
}

SceneManifest manifest_from_line(const std::string& line, std::size_t line_no) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw SchemaViolation(line_no, "not valid JSON");
  SceneManifest m;
  try {
    m.scene_id = jsonu::string(j, "scene_id");
    m.recording_id = jsonu::string(j, "recording_id");
    m.start_frame = jsonu::integer(j, "start_frame");
    m.span = static_cast<int>(jsonu::integer(j, "span"));
    m.eligible = jsonu::boolean(j, "eligible");
    const auto& v = jsonu::field(j, "verdicts");
    m.verdicts.flagged = jsonu::boolean(v, "flagged");
    m.verdicts.jump_frames = static_cast<int>(jsonu::integer(v, "jump_frames"));
    m.verdicts.vibration_frames = static_cast<int>(jsonu::integer(v, "vibration_frames"));
    const auto& f = jsonu::field(j, "features");
    m.features.max_abs_steering = jsonu::number(f, "max_abs_steering");
    m.features.max_abs_accel = jsonu::number(f, "max_abs_accel");
    m.features.turn_signal_used = jsonu::boolean(f, "turn_signal_used");
    m.features.left_signal_frames = static_cast<int>(jsonu::integer(f, "left_signal_frames"));
    m.features.right_signal_frames = static_cast<int>(jsonu::integer(f, "right_signal_frames"));
    m.features.max_speed = jsonu::number(f, "max_speed");
    m.weight = jsonu::number(j, "weight");
    for (const auto& w : jsonu::field(j, "windows")) {
      CaptionWindow win;
      win.window_index = static_cast<int>(jsonu::integer(w, "window_index"));
      win.start = static_cast<int>(jsonu::integer(w, "start"));
      win.end = static_cast<int>(jsonu::integer(w, "end"));
      const auto& reps = jsonu::field(w, "representatives");
      if (!reps.is_array() || reps.size() != win.representatives.size()) {
        throw jsonu::FieldError("'representatives' must hold 8 frame indices");
      }
      for (std::size_t k = 0; k < reps.size(); ++k) win.representatives[k] = reps[k].get<int>();
      m.windows.push_back(win);
    }
  } catch (const jsonu::FieldError& e) {
    throw SchemaViolation(line_no, e.what());
  } catch (const json::exception& e) {
    throw SchemaViolation(line_no, e.what());
  }
  return m;
}

void write_manifest(const std::vector<SceneManifest>& scenes, const fs::path& path) {
  std::string out;
  for (const auto& m : scenes) out += manifest_to_line(m);
  jsonu::write_file_atomic(path, out);
}

std::vector<SceneManifest> read_manifest(const fs::path& path) {
  std::vector<SceneManifest> out;
  const auto lines = jsonu::split_lines(jsonu::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(manifest_from_line(lines[i], i + 1));
  }
  return out;
}

}  // namespace vlagen
