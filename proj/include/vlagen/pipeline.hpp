#pragma once

// Stage orchestration shared by the command-line tool and the end-to-end
// tests. Every stage reads and writes files under the output directory.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vlagen/captioning.hpp"
#include "vlagen/dataset.hpp"
#include "vlagen/estimation.hpp"
#include "vlagen/eval.hpp"
#include "vlagen/ingest.hpp"
#include "vlagen/sampler.hpp"
#include "vlagen/trajfilter.hpp"

namespace vlagen {

enum class CaptionMode { rules_only, mock, endpoint };

struct PipelineConfig {
  std::filesystem::path input = "corpus";
  std::filesystem::path output = "out";
  NoiseConfig noise;
  FilterThresholds filter;
  bool frame_wise_drop = false;  // default drops whole scenes
  BinningConfig bins;
  double delta = kDefaultSmoothing;
  std::size_t n_scenes = 0;  // 0 selects every eligible scene
  std::optional<std::uint64_t> seed;
  CaptionThresholds caption;
  CaptionMode caption_mode = CaptionMode::rules_only;
  std::string vlm_endpoint;
  std::filesystem::path mock_fixture;
  int vlm_concurrency = 4;
  RetryPolicy retry;
  FusionConfig fusion;
  SplitSpec split;
  BaselineConfig baseline;
  int jobs = 1;

  void validate() const;
};

/// Reads a JSON config file; unknown keys are rejected. Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
/// Applies a JSON config document on top of `cfg`.
void apply_config_json(PipelineConfig& cfg, const std::string& text);

using LogFn = std::function<void(const std::string& stage, const std::string& msg)>;

struct StageContext {
  PipelineConfig cfg;
  LogFn log = [](const std::string&, const std::string&) {};
};

/// Recording directories (those holding frames.jsonl) under cfg.input, sorted.
std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& input);

void stage_ingest(const StageContext& ctx);
void stage_estimate(const StageContext& ctx);
void stage_filter(const StageContext& ctx);
void stage_sample(const StageContext& ctx);
void stage_caption(const StageContext& ctx);
void stage_emit(const StageContext& ctx);
void stage_stats(const StageContext& ctx);
void stage_render(const StageContext& ctx);

struct EvalReport {
  std::string model;
  EvalResult result;
  DatasetSplit split;
  AttributionReport attribution;
};

/// Scores the test split against `predictions`, or the kinematic baseline
/// when none are given.
EvalReport stage_eval(const StageContext& ctx,
                      const std::optional<std::filesystem::path>& predictions);

/// ingest, estimate, filter, sample, caption, emit, render, then a baseline eval.
void run_pipeline(const StageContext& ctx);

// Artifact readers used between stages.
std::vector<Pose> read_paths(const std::filesystem::path& path);
void write_paths(const std::vector<Pose>& poses, const std::vector<FrameIndex>& frames,
                 const std::filesystem::path& path);
std::vector<TrajectoryVerdict> read_verdicts(const std::filesystem::path& path);

}  // namespace vlagen
