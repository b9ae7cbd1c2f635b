#include "vlagen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "json_util.hpp"
#include "vlagen/errors.hpp"
#include "vlagen/sampler.hpp"

namespace vlagen {

namespace fs = std::filesystem;
using jsonu::ordered_json;

const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::straight: return "straight";
    case ProfileKind::constant_turn: return "constant_turn";
    case ProfileKind::stop_and_go: return "stop_and_go";
    case ProfileKind::lane_change: return "lane_change";
  }
  return "straight";
}

ProfileKind profile_from_string(const std::string& s) {
  for (auto k : {ProfileKind::straight, ProfileKind::constant_turn, ProfileKind::stop_and_go,
                 ProfileKind::lane_change}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown motion profile '" + s + "'");
}

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr double kDt = 1.0 / kFrameRateHz;
constexpr int kImuPerFrame = kImuRateHz / static_cast<int>(kFrameRateHz);

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Longitudinal acceleration schedule for stop_and_go.
class StopAndGo {
 public:
  explicit StopAndGo(double cruise) : cruise_(cruise) {}

  double accel(double t, double speed) {
    switch (phase_) {
      case Phase::cruise:
        if (t - since_ >= 6.0) enter(Phase::brake, t);
        break;
      case Phase::brake:
        if (speed <= 0.0) enter(Phase::stopped, t);
        break;
      case Phase::stopped:
        if (t - since_ >= 3.0) enter(Phase::go, t);
        break;
      case Phase::go:
        if (speed >= cruise_) enter(Phase::cruise, t);
        break;
    }
    switch (phase_) {
      case Phase::brake: return std::max(-2.0, -speed / kDt);
      case Phase::go: return std::min(1.5, (cruise_ - speed) / kDt);
      default: return 0.0;
    }
  }

 private:
  enum class Phase { cruise, brake, stopped, go };
  void enter(Phase p, double t) {
    phase_ = p;
    since_ = t;
  }
  double cruise_;
  Phase phase_ = Phase::cruise;
  double since_ = 0.0;
};

constexpr double kLaneChangeStart = 10.0;    // s
constexpr double kLaneChangeLength = 4.0;    // s
constexpr double kLaneChangeOffset = 3.5;    // m
constexpr double kBlinkerLead = 1.0;         // s before the maneuver

}  // namespace

GroundTruth gen_truth(const MotionProfile& profile, const TruthOptions& opts) {
  if (!(profile.duration > 0.0) || profile.speed < 0.0) {
    throw ConfigError("profile needs a positive duration and non-negative speed");
  }
  const int n = static_cast<int>(std::llround(profile.duration * kFrameRateHz));
  GroundTruth g;
  g.origin_ecef = geodetic_to_ecef(opts.origin);
  const Eigen::Matrix3d ned_to_ecef = ecef_to_ned_rotation(opts.origin).transpose();
  std::mt19937_64 rng(profile.seed);

  SensorLog& log = g.log;
  log.recording_id = opts.recording_id;
  if (opts.with_camera) log.camera = CameraModel::reference();

  StopAndGo stop_and_go(profile.speed);
  const double lane_rate = profile.speed > 0.0
                               ? 2.0 * M_PI * kLaneChangeOffset /
                                     (profile.speed * kLaneChangeLength * kLaneChangeLength)
                               : 0.0;

  Vec3 p = Vec3::Zero();
  double heading = opts.heading;
  double speed = profile.speed;
  for (int k = 0; k < n; ++k) {
    const double t = k * kDt;
    double a_long = 0.0;
    double omega = 0.0;
    bool left_blinker = false;
    switch (profile.kind) {
      case ProfileKind::straight: break;
      case ProfileKind::constant_turn: omega = profile.yaw_rate; break;
      case ProfileKind::stop_and_go: a_long = stop_and_go.accel(t, speed); break;
      case ProfileKind::lane_change: {
        const double u = t - kLaneChangeStart;
        if (u >= 0.0 && u < kLaneChangeLength) {
          omega = -lane_rate * std::sin(2.0 * M_PI * u / kLaneChangeLength);  // to the left
        }
        left_blinker = u >= -kBlinkerLead && u < kLaneChangeLength;
        break;
      }
    }

    const Vec3 v(speed * std::cos(heading), speed * std::sin(heading), 0.0);
    const double next_speed = std::max(0.0, speed + a_long * kDt);
    const double next_heading = heading + omega * kDt;
    const Vec3 v_next(next_speed * std::cos(next_heading), next_speed * std::sin(next_heading),
                      0.0);
    const Vec3 accel = (v_next - v) / kDt;

    g.position_ned.push_back(p);
    g.velocity_ned.push_back(v);
    g.accel_long.push_back(a_long);
    g.yaw_rate.push_back(omega);

    const TimestampMs ts = opts.start_timestamp + static_cast<TimestampMs>(k) * kFramePeriodMs;
    Pose pose;
    pose.position_ecef = g.origin_ecef + ned_to_ecef * p;
    pose.velocity_ecef = ned_to_ecef * v;
    pose.orientation_ned = {0.0, 0.0, wrap_angle(heading)};
    pose.timestamp = ts;
    g.poses.push_back(pose);

    FrameIndex f;
    f.frame_id = k;
    f.timestamp = ts;
    char path[96];
    std::snprintf(path, sizeof path, "images/%s/%04d.png", opts.recording_id.c_str(), k);
    f.image_path = path;
    log.frames.push_back(f);

    CanFrame c;
    c.timestamp = ts;
    c.v_ego = speed;
    c.v_ego_raw = speed;
    c.a_ego = a_long;
    // NED yaw rate is positive to the right; steering is positive to the left.
    const double wheel = speed > 0.1 ? std::atan(-omega * opts.wheelbase / speed) : 0.0;
    c.steering_angle = wheel * opts.steering_ratio * 180.0 / M_PI;
    c.brake = a_long < 0.0 ? std::min(1.0, -a_long / 5.0) : 0.0;
    c.brake_pressed = a_long < -0.3 || speed == 0.0;
    c.gas = a_long > 0.0 ? std::min(1.0, a_long / 3.0) : 0.0;
    c.gas_pressed = a_long > 0.0;
    c.gear = Gear::drive;
    c.left_blinker = left_blinker;
    log.can.push_back(c);

    log.gnss.push_back({ts, pose.position_ecef, true});

    for (int j = 0; j < kImuPerFrame; ++j) {
      const double tau = static_cast<double>(j) / kImuRateHz;
      const double psi = heading + omega * tau;
      const double cs = std::cos(psi), sn = std::sin(psi);
      ImuSample s;
      s.timestamp = ts + static_cast<TimestampMs>(j * 1000 / kImuRateHz);
      // NED -> forward-right-down, then to forward-left-up.
      const double fx = cs * accel.x() + sn * accel.y();
      const double fy = -sn * accel.x() + cs * accel.y();
      s.accel_device = Vec3(fx, -fy, -accel.z());
      s.gyro_device = Vec3(0.0, 0.0, -omega);
      log.imu.push_back(s);
    }

    p = p + 0.5 * (v + v_next) * kDt;
    speed = next_speed;
    heading = next_heading;
  }

  if (opts.with_traffic_lights && uniform(rng, 0.0, 1.0) < 0.4 && n > 0) {
    const int start = static_cast<int>(uniform(rng, 0.0, std::max(1.0, n - 200.0)));
    const bool arrow = uniform(rng, 0.0, 1.0) < 0.25;
    for (int k = start; k < std::min(n, start + 200); ++k) {
      TrafficLightObs tl;
      tl.frame_id = k;
      const bool first_half = k - start < 100;
      tl.state = first_half ? (arrow ? LightState::red_with_arrow : LightState::red)
                            : LightState::green;
      tl.arrow = first_half && arrow ? ArrowDirection::left : ArrowDirection::none;
      tl.bbox = {940.0, 180.0, 980.0, 260.0};
      log.traffic_lights.push_back(tl);
    }
  }

  if (opts.with_lead_vehicle && opts.with_camera && profile.kind == ProfileKind::straight &&
      uniform(rng, 0.0, 1.0) < 0.5) {
    const double gap = uniform(rng, 15.0, 40.0);
    const CameraModel& cam = *log.camera;
    const double fx = cam.intrinsic(0, 0);
    for (int k = 0; k < n; ++k) {
      const TimestampMs ts = log.frames[k].timestamp;
      log.radar.push_back({ts, gap, 0.0, 0.0});
      if (auto px = project_to_image(Vec3(gap, 0.0, 0.8), cam)) {
        const double hw = 1.0 * fx / gap, hh = 0.8 * fx / gap;
        log.boxes.push_back(
            {k, {px->x() - hw, px->y() - hh, px->x() + hw, px->y() + hh}, ObjectClass::car});
      }
    }
  }
  return g;
}

void CorruptionSpec::validate() const {
  if (gnss_sigma < 0.0 || imu_accel_sigma < 0.0) throw ConfigError("noise sigmas must be >= 0");
  for (const auto& v : vibrations) {
    if (v.amplitude < 0.0 || v.frequency < 0.0 || v.end < v.start) {
      throw ConfigError("vibration needs amplitude, frequency >= 0 and start <= end");
    }
  }
}

CorruptedLog corrupt(const GroundTruth& truth, const CorruptionSpec& spec, std::uint64_t seed) {
  spec.validate();
  CorruptedLog out;
  out.log = truth.log;
  SensorLog& log = out.log;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Geodetic origin = ecef_to_geodetic(truth.origin_ecef);
  const Eigen::Matrix3d ned_to_ecef = ecef_to_ned_rotation(origin).transpose();
  const TimestampMs start = log.frames.empty() ? 0 : log.frames.front().timestamp;
  constexpr double kEps = 1e-9;

  std::vector<bool> jump_marked(spec.jumps.size(), false);
  for (std::size_t k = 0; k < log.gnss.size(); ++k) {
    GnssFix& fix = log.gnss[k];
    const double t = static_cast<double>(fix.timestamp - start) / 1000.0;
    const Vec3& v = truth.velocity_ned[k];
    const double psi = v.head<2>().norm() > 1e-9 ? std::atan2(v.y(), v.x())
                                                 : truth.poses[k].orientation_ned.yaw;
    const Vec3 left(std::sin(psi), -std::cos(psi), 0.0);

    Vec3 offset = Vec3::Zero();
    for (std::size_t j = 0; j < spec.jumps.size(); ++j) {
      const auto& jump = spec.jumps[j];
      if (t + kEps < jump.time) continue;
      offset += jump.displacement * left;
      if (!jump_marked[j]) {
        out.labels.jump_frames.push_back(log.frames[k].frame_id);
        jump_marked[j] = true;
      }
    }
    bool vibrating = false;
    for (const auto& vib : spec.vibrations) {
      if (t + kEps < vib.start || t - kEps > vib.end) continue;
      offset += vib.amplitude * std::cos(2.0 * M_PI * vib.frequency * (t - vib.start)) * left;
      vibrating = true;
    }
    if (vibrating) out.labels.vibration_frames.push_back(log.frames[k].frame_id);
    if (spec.gnss_sigma > 0.0) {
      offset += spec.gnss_sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    if (!offset.isZero(0.0)) fix.position_ecef += ned_to_ecef * offset;
    for (const auto& [a, b] : spec.gnss_dropout) {
      if (t + kEps >= a && t - kEps <= b) fix.fix_valid = false;
    }
  }
  if (spec.imu_accel_sigma > 0.0) {
    for (auto& s : log.imu) {
      s.accel_device += spec.imu_accel_sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
  }
  std::sort(out.labels.jump_frames.begin(), out.labels.jump_frames.end());
  return out;
}

void CorpusSpec::validate() const {
  if (n_scenes < 1) throw ConfigError("corpus needs at least one scene");
  double total = 0.0;
  for (const auto& [k, f] : mix) {
    if (f < 0.0) throw ConfigError("profile mix fractions must be >= 0");
    total += f;
  }
  if (!(total > 0.0)) throw ConfigError("profile mix is empty");
  if (jump_fraction < 0.0 || vibration_fraction < 0.0 || jump_fraction + vibration_fraction > 1.0)
    throw ConfigError("fault fractions must be >= 0 and sum to at most 1");
  if (duration < 30.0) throw ConfigError("recordings must last at least 30 s");
}

namespace {

template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::vector<ProfileKind> allocate_kinds(const CorpusSpec& spec) {
  double total = 0.0;
  for (const auto& [k, f] : spec.mix) total += f;
  // Largest-remainder apportionment so the mix is exact up to rounding.
  std::vector<std::pair<ProfileKind, double>> quotas;
  std::size_t assigned = 0;
  std::vector<ProfileKind> kinds;
  for (const auto& [k, f] : spec.mix) {
    const double q = f / total * static_cast<double>(spec.n_scenes);
    const auto whole = static_cast<std::size_t>(std::floor(q));
    kinds.insert(kinds.end(), whole, k);
    assigned += whole;
    quotas.emplace_back(k, q - static_cast<double>(whole));
  }
  std::stable_sort(quotas.begin(), quotas.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; assigned < spec.n_scenes; ++i, ++assigned) {
    kinds.push_back(quotas[i % quotas.size()].first);
  }
  seeded_shuffle(kinds, spec.seed ^ 0x6b696e6473ULL);
  return kinds;
}

ordered_json labels_json(const FaultLabels& l) {
  return {{"jump_frames", l.jump_frames}, {"vibration_frames", l.vibration_frames}};
}

}  // namespace

std::vector<CorpusScene> gen_corpus(const fs::path& dir, const CorpusSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_scenes;
  const auto kinds = allocate_kinds(spec);

  enum class Fault { none, jump, vibration };
  std::vector<Fault> faults(n, Fault::none);
  {
    const auto n_jump = static_cast<std::size_t>(std::llround(spec.jump_fraction * n));
    const auto n_vib = std::min(n - std::min(n, n_jump),
                                static_cast<std::size_t>(std::llround(spec.vibration_fraction * n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    seeded_shuffle(order, spec.seed ^ 0x6661756c7473ULL);
    for (std::size_t i = 0; i < std::min(n, n_jump); ++i) faults[order[i]] = Fault::jump;
    for (std::size_t i = n_jump; i < n_jump + n_vib; ++i) faults[order[i]] = Fault::vibration;
  }

  fs::create_directories(dir);
  std::vector<CorpusScene> scenes;
  ordered_json corpus_scenes = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(scene_seed(spec.seed, i));
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);

    MotionProfile profile;
    profile.kind = kinds[i];
    profile.speed = uniform(rng, 8.0, 22.0);
    profile.duration = spec.duration;
    profile.seed = rng();
    if (profile.kind == ProfileKind::constant_turn) {
      profile.yaw_rate = uniform(rng, 0.05, 0.12) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
    }
    TruthOptions opts;
    opts.recording_id = id;
    opts.start_timestamp = 1700000000000 + static_cast<TimestampMs>(i) * 100000;
    opts.heading = uniform(rng, -M_PI, M_PI);
    const GroundTruth truth = gen_truth(profile, opts);

    CorruptionSpec cs;
    cs.gnss_sigma = spec.gnss_sigma;
    cs.imu_accel_sigma = spec.imu_accel_sigma;
    // On the frame grid, so a 10 Hz vibration hits its peaks at every fix.
    const double fault_time = std::round(uniform(rng, 3.0, 24.0) * kFrameRateHz) / kFrameRateHz;
    if (faults[i] == Fault::jump) cs.jumps.push_back({fault_time, spec.jump_displacement});
    if (faults[i] == Fault::vibration) {
      cs.vibrations.push_back(
          {fault_time, fault_time + 5.0, spec.vibration_amplitude, spec.vibration_frequency});
    }
    CorruptedLog noisy = corrupt(truth, cs, rng());

    CorpusScene scene;
    scene.recording_id = id;
    scene.kind = profile.kind;
    scene.labels = noisy.labels;
    const auto aligned = align_to_frames(truth.log);
    const std::size_t span = std::min<std::size_t>(aligned.size(), kSceneFrames);
    const auto features =
        extract_features(std::span<const AlignedFrame>(aligned.data(), span));
    scene.cell = cell_of(features, BinningConfig{});

    const fs::path rec_dir = dir / id;
    write_log(noisy.log, rec_dir);

    std::string truth_lines;
    std::size_t jv = 0, vv = 0;
    for (std::size_t k = 0; k < truth.poses.size(); ++k) {
      const auto& pose = truth.poses[k];
      const std::int64_t fid = truth.log.frames[k].frame_id;
      ordered_json faults_here = ordered_json::array();
      while (jv < scene.labels.jump_frames.size() && scene.labels.jump_frames[jv] < fid) ++jv;
      while (vv < scene.labels.vibration_frames.size() &&
             scene.labels.vibration_frames[vv] < fid)
        ++vv;
      if (jv < scene.labels.jump_frames.size() && scene.labels.jump_frames[jv] == fid)
        faults_here.push_back("jump");
      if (vv < scene.labels.vibration_frames.size() && scene.labels.vibration_frames[vv] == fid)
        faults_here.push_back("vibration");
      ordered_json line;
      line["frame_id"] = fid;
      line["timestamp"] = pose.timestamp;
      line["position_ecef"] = jsonu::to_json(pose.position_ecef);
      line["velocity_ecef"] = jsonu::to_json(pose.velocity_ecef);
      line["yaw"] = pose.orientation_ned.yaw;
      line["faults"] = std::move(faults_here);
      truth_lines += jsonu::dump_line(line);
    }
    jsonu::write_file_atomic(rec_dir / "truth.jsonl", truth_lines);

    ordered_json meta;
    meta["recording_id"] = scene.recording_id;
    meta["profile"] = to_string(profile.kind);
    meta["speed"] = profile.speed;
    meta["yaw_rate"] = profile.yaw_rate;
    meta["heading"] = opts.heading;
    meta["cell"] = scene.cell;
    meta["labels"] = labels_json(scene.labels);
    jsonu::write_file_atomic(rec_dir / "truth_meta.json", meta.dump(2) + "\n");

    corpus_scenes.push_back({{"recording_id", scene.recording_id},
                             {"profile", to_string(profile.kind)},
                             {"cell", scene.cell},
                             {"labels", labels_json(scene.labels)}});
    scenes.push_back(std::move(scene));
  }

  ordered_json corpus;
  corpus["n_scenes"] = n;
  corpus["seed"] = spec.seed;
  corpus["scene_hours"] = static_cast<double>(n) * 30.0 / 3600.0;
  corpus["scenes"] = std::move(corpus_scenes);
  jsonu::write_file_atomic(dir / "corpus.json", corpus.dump(2) + "\n");
  return scenes;
}

}  // namespace vlagen
