#include "vlagen/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <future>
#include <map>
#include <mutex>
#include <thread>

#include "json_util.hpp"
#include "vlagen/errors.hpp"
#include "vlagen/vlm.hpp"

namespace vlagen {

namespace fs = std::filesystem;
using jsonu::json;
using jsonu::ordered_json;

// --- configuration -----------------------------------------------------------

void PipelineConfig::validate() const {
  noise.validate();
  filter.validate();
  bins.validate();
  split.validate();
  if (!(delta > 0.0)) throw ConfigError("smoothing delta must be positive");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (vlm_concurrency < 1) throw ConfigError("VLM concurrency must be at least 1");
  if (retry.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (caption_mode == CaptionMode::endpoint && vlm_endpoint.empty()) {
    throw ConfigError("caption mode 'endpoint' needs a VLM endpoint");
  }
}

namespace {

using Setter = std::function<void(const json&)>;

void apply_section(const json& obj, const std::string& section,
                   const std::map<std::string, Setter>& setters) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) +
                        "'");
    }
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

template <class T>
Setter set(T& target) {
  return [&target](const json& v) { target = v.get<T>(); };
}

Setter set_path(fs::path& target) {
  return [&target](const json& v) { target = v.get<std::string>(); };
}

CaptionMode mode_from_string(const std::string& s) {
  if (s == "rules_only") return CaptionMode::rules_only;
  if (s == "mock") return CaptionMode::mock;
  if (s == "endpoint") return CaptionMode::endpoint;
  throw ConfigError("caption mode must be rules_only, mock or endpoint, got '" + s + "'");
}

}  // namespace

void apply_config_json(PipelineConfig& cfg, const std::string& text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ConfigError("config file is not a JSON object");
  }
  std::uint64_t seed = 0;
  std::int64_t backoff_ms = cfg.retry.initial_backoff.count();
  std::string mode;
  auto& th = cfg.caption;
  std::map<std::string, Setter> top{
      {"input", set_path(cfg.input)},
      {"output", set_path(cfg.output)},
      {"jobs", set(cfg.jobs)},
      {"noise",
       [&](const json& v) {
         apply_section(v, "noise", {{"gnss_sigma", set(cfg.noise.gnss_sigma)},
                                    {"accel_sigma", set(cfg.noise.accel_sigma)},
                                    {"gyro_sigma", set(cfg.noise.gyro_sigma)},
                                    {"initial_pos_sigma", set(cfg.noise.initial_pos_sigma)}});
       }},
      {"filter",
       [&](const json& v) {
         apply_section(v, "filter",
                       {{"max_speed_kmh", set(cfg.filter.max_speed_kmh)},
                        {"fps", set(cfg.filter.fps)},
                        {"tolerance", set(cfg.filter.tolerance)},
                        {"vibration_variance_threshold",
                         set(cfg.filter.vibration_variance_threshold)},
                        {"moving_average_window", set(cfg.filter.moving_average_window)},
                        {"frame_wise_drop", set(cfg.frame_wise_drop)}});
       }},
      {"sampling",
       [&](const json& v) {
         apply_section(v, "sampling",
                       {{"steering_edges", set(cfg.bins.steering_edges)},
                        {"accel_edges", set(cfg.bins.accel_edges)},
                        {"ternary_turn_signal", set(cfg.bins.ternary_turn_signal)},
                        {"delta", set(cfg.delta)},
                        {"n_scenes", set(cfg.n_scenes)},
                        {"seed", [&](const json& s) {
                           seed = s.get<std::uint64_t>();
                           cfg.seed = seed;
                         }}});
       }},
      {"caption",
       [&](const json& v) {
         apply_section(v, "caption",
                       {{"stopped_speed", set(th.stopped_speed)},
                        {"accel_band", set(th.accel_band)},
                        {"slow_kmh", set(th.slow_kmh)},
                        {"moderate_kmh", set(th.moderate_kmh)},
                        {"straight_curvature", set(th.straight_curvature)},
                        {"turning_curvature", set(th.turning_curvature)},
                        {"mode", set(mode)},
                        {"vlm_endpoint", set(cfg.vlm_endpoint)},
                        {"mock_fixture", set_path(cfg.mock_fixture)},
                        {"concurrency", set(cfg.vlm_concurrency)},
                        {"max_retries", set(cfg.retry.max_retries)},
                        {"initial_backoff_ms", set(backoff_ms)}});
       }},
      {"fusion",
       [&](const json& v) {
         apply_section(v, "fusion", {{"lane_half_width", set(cfg.fusion.lane_half_width)},
                                     {"target_height", set(cfg.fusion.target_height)}});
       }},
      {"split",
       [&](const json& v) {
         apply_section(v, "split", {{"train", set(cfg.split.train)},
                                    {"val", set(cfg.split.val)},
                                    {"test", set(cfg.split.test)},
                                    {"seed", set(cfg.split.seed)},
                                    {"frame_stride", set(cfg.split.frame_stride)}});
       }},
      {"baseline",
       [&](const json& v) {
         apply_section(v, "baseline", {{"wheelbase", set(cfg.baseline.wheelbase)},
                                       {"steering_ratio", set(cfg.baseline.steering_ratio)}});
       }},
  };
  apply_section(doc, "", top);
  if (!mode.empty()) cfg.caption_mode = mode_from_string(mode);
  cfg.retry.initial_backoff = std::chrono::milliseconds(backoff_ms);
}

PipelineConfig load_config(const fs::path& path) {
  PipelineConfig cfg;
  std::string text;
  try {
    text = jsonu::read_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  apply_config_json(cfg, text);
  return cfg;
}

// --- helpers -------------------------------------------------------------------

namespace {

template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

fs::path paths_file(const PipelineConfig& cfg, const std::string& rec) {
  return cfg.output / "paths" / (rec + ".jsonl");
}
fs::path verdicts_file(const PipelineConfig& cfg, const std::string& rec) {
  return cfg.output / "verdicts" / (rec + ".jsonl");
}
fs::path manifest_file(const PipelineConfig& cfg) { return cfg.output / "scenes.manifest.jsonl"; }
fs::path records_file(const PipelineConfig& cfg, const std::string& scene) {
  return cfg.output / "records" / (scene + ".jsonl");
}
fs::path captions_file(const PipelineConfig& cfg, const std::string& scene) {
  return cfg.output / "captions" / (scene + ".jsonl");
}
fs::path windows_file(const PipelineConfig& cfg, const std::string& scene) {
  return cfg.output / "captions" / (scene + ".windows.jsonl");
}

template <class F>
void for_each_line(const fs::path& path, F&& fn) {
  const auto lines = jsonu::split_lines(jsonu::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) throw SchemaViolation(i + 1, path.string() + " is not JSONL");
    try {
      fn(j);
    } catch (const jsonu::FieldError& e) {
      throw SchemaViolation(i + 1, path.string() + ": " + e.what());
    }
  }
}

std::uint64_t require_seed(const PipelineConfig& cfg) {
  if (!cfg.seed) throw ConfigError("sampling needs a seed (--seed or sampling.seed)");
  return *cfg.seed;
}

/// Everything the caption and emit stages derive from one recording.
struct RecordingState {
  SensorLog log;
  std::vector<AlignedFrame> aligned;
  std::vector<Pose> poses;
  std::vector<EgoTrajectory> trajectories;
  std::vector<TrajectoryVerdict> verdicts;
  std::vector<std::optional<LeadVehicleObs>> leads;
};

RecordingState load_recording(const PipelineConfig& cfg, const std::string& rec) {
  RecordingState s;
  s.log = parse_log(cfg.input / rec);
  s.aligned = align_to_frames(s.log);
  s.poses = read_paths(paths_file(cfg, rec));
  if (s.poses.size() != s.aligned.size()) {
    throw FrameMismatch("path of " + rec + " has " + std::to_string(s.poses.size()) +
                        " poses for " + std::to_string(s.aligned.size()) + " frames");
  }
  s.trajectories = annotate_future(s.poses);
  s.verdicts = read_verdicts(verdicts_file(cfg, rec));
  if (s.verdicts.size() != s.aligned.size()) {
    throw FrameMismatch("verdicts of " + rec + " do not cover every frame");
  }
  if (s.log.camera) {
    s.leads = lead_vehicle_stream(s.aligned, *s.log.camera, cfg.fusion);
  } else {
    s.leads.assign(s.aligned.size(), std::nullopt);
  }
  return s;
}

/// Caches the most recently loaded recording; manifests are sorted by scene
/// id, so scenes of one recording are adjacent.
class RecordingCache {
 public:
  explicit RecordingCache(const PipelineConfig& cfg) : cfg_(cfg) {}
  const RecordingState& get(const std::string& rec) {
    if (rec != current_) {
      state_ = load_recording(cfg_, rec);
      current_ = rec;
    }
    return state_;
  }

 private:
  const PipelineConfig& cfg_;
  std::string current_;
  RecordingState state_;
};

std::vector<SceneManifest> load_manifest(const PipelineConfig& cfg) {
  return read_manifest(manifest_file(cfg));
}

}  // namespace

std::vector<fs::path> list_recordings(const fs::path& input) {
  if (!fs::is_directory(input)) throw ConfigError("input directory " + input.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_directory() && fs::exists(entry.path() / "frames.jsonl")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_paths(const std::vector<Pose>& poses, const std::vector<FrameIndex>& frames,
                 const fs::path& path) {
  std::string out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    ordered_json j;
    j["frame_id"] = i < frames.size() ? frames[i].frame_id : static_cast<std::int64_t>(i);
    j["timestamp"] = poses[i].timestamp;
    j["position_ecef"] = jsonu::to_json(poses[i].position_ecef);
    j["velocity_ecef"] = jsonu::to_json(poses[i].velocity_ecef);
    const auto& o = poses[i].orientation_ned;
    j["orientation_ned"] = jsonu::to_json(Vec3(o.roll, o.pitch, o.yaw));
    out += jsonu::dump_line(j);
  }
  jsonu::write_file_atomic(path, out);
}

std::vector<Pose> read_paths(const fs::path& path) {
  std::vector<Pose> out;
  for_each_line(path, [&](const json& j) {
    Pose p;
    p.timestamp = jsonu::integer(j, "timestamp");
    p.position_ecef = jsonu::vec3_at(j, "position_ecef");
    p.velocity_ecef = jsonu::vec3_at(j, "velocity_ecef");
    const Vec3 o = jsonu::vec3_at(j, "orientation_ned");
    p.orientation_ned = {o.x(), o.y(), o.z()};
    out.push_back(p);
  });
  return out;
}

std::vector<TrajectoryVerdict> read_verdicts(const fs::path& path) {
  std::vector<TrajectoryVerdict> out;
  for_each_line(path, [&](const json& j) {
    TrajectoryVerdict v;
    v.valid = jsonu::boolean(j, "valid");
    const std::string reason = jsonu::string(j, "reason");
    v.reason = reason == "jump"        ? VerdictReason::jump
               : reason == "vibration" ? VerdictReason::vibration
                                       : VerdictReason::ok;
    v.metric = jsonu::number(j, "metric");
    out.push_back(v);
  });
  return out;
}

// --- stages ------------------------------------------------------------------

void stage_ingest(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto recs = list_recordings(cfg.input);
  if (recs.empty()) throw DataError("no recordings under " + cfg.input.string());
  std::vector<ordered_json> summaries(recs.size());
  parallel_for(recs.size(), cfg.jobs, [&](std::size_t i) {
    StreamCounts counts;
    const SensorLog log = parse_log(recs[i], &counts);
    const auto aligned = align_to_frames(log);
    const auto available = std::count_if(aligned.begin(), aligned.end(),
                                         [](const AlignedFrame& f) { return f.gnss_available; });
    ordered_json j;
    j["recording_id"] = log.recording_id;
    j["counts"] = {{"can", counts.can},       {"gnss", counts.gnss},
                   {"imu", counts.imu},       {"frames", counts.frames},
                   {"traffic_lights", counts.traffic_lights},
                   {"radar", counts.radar},   {"boxes", counts.boxes},
                   {"calib", counts.calib}};
    j["gnss_available_frames"] = available;
    j["camera"] = log.camera.has_value();
    summaries[i] = std::move(j);
  });
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string rec = recs[i].filename().string();
    jsonu::write_file_atomic(cfg.output / "ingest" / (rec + ".json"), summaries[i].dump(2) + "\n");
  }
  ctx.log("ingest", "validated " + std::to_string(recs.size()) + " recordings");
}

void stage_estimate(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto recs = list_recordings(cfg.input);
  parallel_for(recs.size(), cfg.jobs, [&](std::size_t i) {
    const SensorLog log = parse_log(recs[i]);
    const auto poses = estimate_path(log, cfg.noise);
    write_paths(poses, log.frames, paths_file(cfg, recs[i].filename().string()));
  });
  ctx.log("estimate", "estimated " + std::to_string(recs.size()) + " paths");
}

void stage_filter(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto recs = list_recordings(cfg.input);
  std::atomic<std::size_t> flagged{0};
  parallel_for(recs.size(), cfg.jobs, [&](std::size_t i) {
    const std::string rec = recs[i].filename().string();
    const auto poses = read_paths(paths_file(cfg, rec));
    const auto verdicts = filter_recording(annotate_future(poses), cfg.filter);
    std::string out;
    for (std::size_t k = 0; k < verdicts.size(); ++k) {
      ordered_json j;
      j["frame_id"] = static_cast<std::int64_t>(k);
      j["valid"] = verdicts[k].valid;
      j["reason"] = to_string(verdicts[k].reason);
      j["metric"] = verdicts[k].metric;
      out += jsonu::dump_line(j);
      if (!verdicts[k].valid) ++flagged;
    }
    jsonu::write_file_atomic(verdicts_file(cfg, rec), out);
  });
  ctx.log("filter", std::to_string(flagged.load()) + " trajectories flagged");
}

void stage_sample(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const std::uint64_t seed = require_seed(cfg);
  const auto recs = list_recordings(cfg.input);
  std::vector<std::vector<SceneCandidate>> per_rec(recs.size());
  std::vector<std::vector<SceneVerdicts>> per_rec_verdicts(recs.size());
  parallel_for(recs.size(), cfg.jobs, [&](std::size_t i) {
    const std::string rec = recs[i].filename().string();
    const SensorLog log = parse_log(recs[i]);
    const auto aligned = align_to_frames(log);
    auto cands = enumerate_candidates(rec, aligned);
    const auto verdicts = read_verdicts(verdicts_file(cfg, rec));
    for (auto& c : cands) {
      SceneVerdicts sv;
      for (std::int64_t k = c.start_frame; k < c.start_frame + c.span; ++k) {
        const auto& v = verdicts.at(static_cast<std::size_t>(k));
        if (v.reason == VerdictReason::jump) ++sv.jump_frames;
        if (v.reason == VerdictReason::vibration) ++sv.vibration_frames;
      }
      sv.flagged = sv.jump_frames + sv.vibration_frames > 0;
      if (sv.flagged && !cfg.frame_wise_drop) c.eligible = false;
      per_rec_verdicts[i].push_back(sv);
    }
    per_rec[i] = std::move(cands);
  });

  std::vector<SceneCandidate> all;
  std::map<std::string, SceneVerdicts> verdict_of;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t k = 0; k < per_rec[i].size(); ++k) {
      verdict_of[per_rec[i][k].scene_id()] = per_rec_verdicts[i][k];
      all.push_back(per_rec[i][k]);
    }
  }
  assign_weights(all, cfg.bins, cfg.delta);
  std::vector<SceneCandidate> eligible;
  std::copy_if(all.begin(), all.end(), std::back_inserter(eligible),
               [](const SceneCandidate& c) { return c.eligible; });
  const std::size_t n = cfg.n_scenes == 0 ? eligible.size() : cfg.n_scenes;
  auto picked = sample_scenes(all, n, seed);
  std::sort(picked.begin(), picked.end(), [](const SceneCandidate& a, const SceneCandidate& b) {
    return a.scene_id() < b.scene_id();
  });

  std::vector<SceneManifest> manifest;
  for (const auto& c : picked) {
    SceneManifest m;
    m.scene_id = c.scene_id();
    m.recording_id = c.recording_id;
    m.start_frame = c.start_frame;
    m.span = c.span;
    m.eligible = c.eligible;
    m.verdicts = verdict_of[m.scene_id];
    m.features = c.features;
    m.weight = c.weight;
    m.windows = make_windows(c.span);
    manifest.push_back(std::move(m));
  }
  write_manifest(manifest, manifest_file(cfg));
  jsonu::write_file_atomic(cfg.output / "distribution.csv",
                           distribution_report(eligible, picked, cfg.bins).to_csv());
  ctx.log("sample", "selected " + std::to_string(picked.size()) + " of " +
                        std::to_string(eligible.size()) + " eligible scenes (" +
                        std::to_string(all.size()) + " candidates)");
}

namespace {

std::unique_ptr<VlmClient> make_client(const PipelineConfig& cfg,
                                       std::unique_ptr<MockVlmServer>& mock) {
  switch (cfg.caption_mode) {
    case CaptionMode::rules_only: return nullptr;
    case CaptionMode::mock: {
      MockVlmScript script;
      if (!cfg.mock_fixture.empty()) script = MockVlmScript::from_file(cfg.mock_fixture);
      mock = std::make_unique<MockVlmServer>(script);
      mock->start();
      return std::make_unique<HttpVlmClient>(mock->endpoint(), cfg.retry);
    }
    case CaptionMode::endpoint:
      return std::make_unique<HttpVlmClient>(cfg.vlm_endpoint, cfg.retry);
  }
  return nullptr;
}

Blinker blinker_of(const AlignedFrame& f) {
  if (!f.can) return Blinker::none;
  if (f.can->left_blinker) return Blinker::left;
  if (f.can->right_blinker) return Blinker::right;
  return Blinker::none;
}

ordered_json attributes_json(const AttributeSet& a) {
  auto one = [](const Attribute& x) {
    return ordered_json{{"value", x.value}, {"probability", x.probability}};
  };
  return {{"road_width", one(a.road_width)},
          {"highway", one(a.highway)},
          {"tunnel", one(a.tunnel)},
          {"weather", one(a.weather)},
          {"pedestrian_risk", one(a.pedestrian_risk)}};
}

}  // namespace

void stage_caption(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto manifest = load_manifest(cfg);
  std::unique_ptr<MockVlmServer> mock;
  const auto client = make_client(cfg, mock);
  RecordingCache cache(cfg);
  std::size_t vlm_captions = 0, combined = 0;

  for (const auto& scene : manifest) {
    const RecordingState& rs = cache.get(scene.recording_id);
    const auto start = static_cast<std::size_t>(scene.start_frame);
    if (start + static_cast<std::size_t>(scene.span) > rs.aligned.size()) {
      throw FrameMismatch("scene " + scene.scene_id + " runs past the end of its recording");
    }
    std::vector<RuleCaption> rules;
    for (int k = 0; k < scene.span; ++k) {
      const std::size_t idx = start + static_cast<std::size_t>(k);
      const AlignedFrame& f = rs.aligned[idx];
      FrameContext fc;
      if (f.can) {
        fc.speed = f.can->v_ego;
        fc.accel = f.can->a_ego;
      }
      const auto& traj = rs.trajectories[idx];
      if (traj.complete() && rs.verdicts[idx].valid) fc.curvature = curvature(traj);
      fc.lead = rs.leads[idx];
      fc.traffic_light = f.primary_light();
      fc.blinker = blinker_of(f);
      rules.push_back(rule_caption(fc, cfg.caption));
    }

    std::vector<VlmCaption> window_caps(scene.windows.size());
    auto caption_window = [&](std::size_t w) {
      const auto& win = scene.windows[w];
      std::vector<RuleCaption> reps;
      std::vector<std::string> frames;
      for (int r : win.representatives) {
        reps.push_back(rules[static_cast<std::size_t>(r)]);
        frames.push_back(rs.aligned[start + static_cast<std::size_t>(r)].frame.image_path);
      }
      if (!client) return VlmCaption{win.window_index, "", std::nullopt};
      const AttributeSet attrs = extract_attributes(frames, *client);
      return augment_caption(win, frames, rule_digest(reps), attrs, *client);
    };
    // Bounded number of windows in flight; results land by window index.
    const std::size_t bound = client ? static_cast<std::size_t>(cfg.vlm_concurrency) : 1;
    for (std::size_t w0 = 0; w0 < window_caps.size(); w0 += bound) {
      std::vector<std::future<VlmCaption>> inflight;
      for (std::size_t w = w0; w < std::min(window_caps.size(), w0 + bound); ++w) {
        inflight.push_back(std::async(bound > 1 ? std::launch::async : std::launch::deferred,
                                      caption_window, w));
      }
      for (std::size_t i = 0; i < inflight.size(); ++i) window_caps[w0 + i] = inflight[i].get();
    }
    if (client) vlm_captions += window_caps.size();

    std::string frame_lines, window_lines;
    for (int k = 0; k < scene.span; ++k) {
      const auto w = static_cast<std::size_t>(k / kWindowFrames);
      ordered_json j;
      j["frame_id"] = rs.aligned[start + static_cast<std::size_t>(k)].frame.frame_id;
      j["caption"] =
          compose_frame_caption(k, rules[static_cast<std::size_t>(k)], scene.windows[w],
                                window_caps[w]);
      frame_lines += jsonu::dump_line(j);
      ++combined;
    }
    for (const auto& wc : window_caps) {
      ordered_json j;
      j["window_index"] = wc.window_index;
      j["free_text"] = wc.free_text;
      j["attributes"] = wc.attributes ? attributes_json(*wc.attributes) : ordered_json(nullptr);
      window_lines += jsonu::dump_line(j);
    }
    jsonu::write_file_atomic(captions_file(cfg, scene.scene_id), frame_lines);
    jsonu::write_file_atomic(windows_file(cfg, scene.scene_id), window_lines);
  }
  if (mock) mock->stop();
  ctx.log("caption", std::to_string(combined) + " combined captions from " +
                         std::to_string(vlm_captions) + " VLM captions");
}

void stage_emit(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto manifest = load_manifest(cfg);
  RecordingCache cache(cfg);
  std::vector<FrameRecord> all;
  for (const auto& scene : manifest) {
    const RecordingState& rs = cache.get(scene.recording_id);
    std::map<std::int64_t, std::string> captions;
    for_each_line(captions_file(cfg, scene.scene_id), [&](const json& j) {
      captions[jsonu::integer(j, "frame_id")] = jsonu::string(j, "caption");
    });
    std::vector<FrameRecord> records;
    const auto start = static_cast<std::size_t>(scene.start_frame);
    for (int k = 0; k < scene.span; ++k) {
      const std::size_t idx = start + static_cast<std::size_t>(k);
      const AlignedFrame& f = rs.aligned[idx];
      auto it = captions.find(f.frame.frame_id);
      if (it == captions.end()) {
        throw FrameMismatch("no caption for frame " + std::to_string(f.frame.frame_id) +
                            " of scene " + scene.scene_id);
      }
      const EgoTrajectory empty;
      const EgoTrajectory& traj =
          cfg.frame_wise_drop && !rs.verdicts[idx].valid ? empty : rs.trajectories[idx];
      records.push_back(
          assemble_record(f, rs.poses[idx], traj, it->second, rs.log.camera, rs.leads[idx]));
    }
    emit_jsonl(records, records_file(cfg, scene.scene_id));
    all.insert(all.end(), std::make_move_iterator(records.begin()),
               std::make_move_iterator(records.end()));
  }
  const DatasetStats stats =
      compute_stats(all, static_cast<std::int64_t>(manifest.size()), cfg.bins);
  jsonu::write_file_atomic(cfg.output / "stats.json", stats.to_json());
  ctx.log("emit", std::to_string(all.size()) + " records in " + std::to_string(manifest.size()) +
                      " scenes");
}

void stage_stats(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto manifest = load_manifest(cfg);
  std::vector<FrameRecord> all;
  for (const auto& scene : manifest) {
    auto recs = read_jsonl(records_file(cfg, scene.scene_id));
    all.insert(all.end(), std::make_move_iterator(recs.begin()),
               std::make_move_iterator(recs.end()));
  }
  const DatasetStats stats =
      compute_stats(all, static_cast<std::int64_t>(manifest.size()), cfg.bins);
  jsonu::write_file_atomic(cfg.output / "stats.json", stats.to_json());
  ctx.log("stats", std::to_string(stats.frame_count) + " frames, " +
                       std::to_string(stats.hours) + " h");
}

void stage_render(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto manifest = load_manifest(cfg);
  std::size_t rendered = 0;
  for (const auto& scene : manifest) {
    const auto recs = read_jsonl(records_file(cfg, scene.scene_id));
    try {
      jsonu::write_file_atomic(cfg.output / "overlays" / (scene.scene_id + ".csv"),
                               overlay_csv(recs));
      ++rendered;
    } catch (const MissingCamera& e) {
      ctx.log("render", "skipping " + scene.scene_id + ": " + e.what());
    }
  }
  ctx.log("render", "wrote " + std::to_string(rendered) + " overlay files");
}

EvalReport stage_eval(const StageContext& ctx, const std::optional<fs::path>& predictions) {
  const auto& cfg = ctx.cfg;
  const auto manifest = load_manifest(cfg);
  std::vector<SceneRecords> scenes;
  for (const auto& m : manifest) {
    scenes.push_back({m.scene_id, read_jsonl(records_file(cfg, m.scene_id))});
  }
  SplitSpec spec = cfg.split;
  EvalReport report;
  report.split = split_and_subsample(scenes, spec);
  report.model = predictions ? predictions->filename().string() : "baseline";

  std::map<std::pair<std::string, std::int64_t>, Prediction> by_key;
  if (predictions) {
    for (auto& p : read_predictions(*predictions)) {
      by_key[{p.scene_id, p.frame_id}] = std::move(p);
    }
  }
  std::vector<TrajectoryPair> pairs;
  for (const auto& sf : report.split.test) {
    const auto& scene = scenes[sf.scene];
    const FrameRecord& r = scene.records[sf.frame];
    TrajectoryPair pair;
    pair.scene_id = scene.scene_id;
    pair.frame_id = r.frame_id;
    pair.ground_truth = subsample_trajectory(r.trajectory);
    pair.gt_caption = r.caption;
    if (predictions) {
      auto it = by_key.find({scene.scene_id, r.frame_id});
      if (it == by_key.end()) it = by_key.find({"", r.frame_id});
      if (it == by_key.end()) {
        throw DataError("no prediction for frame " + std::to_string(r.frame_id) + " of scene " +
                        scene.scene_id);
      }
      pair.predicted = it->second.trajectory;
      pair.predicted_caption = it->second.caption;
    } else {
      pair.predicted = baseline_predict(r, cfg.baseline);
    }
    pairs.push_back(std::move(pair));
  }
  report.result = evaluate(pairs);
  report.attribution = word_attribution(pairs);

  ordered_json j;
  j["model"] = report.model;
  j["averaging"] = "macro";
  j["ade"] = report.result.ade;
  j["fde"] = report.result.fde;
  j["count"] = report.result.count;
  j["split"] = {{"train_scenes", report.split.scenes.train.size()},
                {"val_scenes", report.split.scenes.val.size()},
                {"test_scenes", report.split.scenes.test.size()},
                {"train_frames", report.split.train.size()},
                {"val_frames", report.split.val.size()},
                {"test_frames", report.split.test.size()},
                {"seed", spec.seed},
                {"frame_rate_hz", kFrameRateHz / spec.frame_stride}};
  jsonu::write_file_atomic(cfg.output / "eval" / "report.json", j.dump(2) + "\n");
  jsonu::write_file_atomic(cfg.output / "eval" / "attribution.csv",
                           attribution_csv(report.attribution.by_ade));
  jsonu::write_file_atomic(cfg.output / "eval" / "attribution_by_fde.csv",
                           attribution_csv(report.attribution.by_fde));
  ctx.log("eval", report.model + ": ade " + std::to_string(report.result.ade) + " m, fde " +
                      std::to_string(report.result.fde) + " m over " +
                      std::to_string(report.result.count) + " frames");
  return report;
}

void run_pipeline(const StageContext& ctx) {
  ctx.cfg.validate();
  require_seed(ctx.cfg);
  stage_ingest(ctx);
  stage_estimate(ctx);
  stage_filter(ctx);
  stage_sample(ctx);
  stage_caption(ctx);
  stage_emit(ctx);
  stage_render(ctx);
  stage_eval(ctx, std::nullopt);
}

}  // namespace vlagen
