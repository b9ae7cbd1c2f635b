#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vlagen/dataset.hpp"

namespace vlagen {

/// Indices of the 10 evaluated points within a 60-point trajectory.
inline constexpr std::array<int, 10> kSubsampleIndices{5, 11, 17, 23, 29, 35, 41, 47, 53, 59};

/// Throws IncompleteTrajectory unless the trajectory has 60 points.
std::vector<Vec3> subsample_trajectory(const std::vector<Vec3>& points);

/// Mean point-wise Euclidean distance. Throws LengthMismatch, EmptyTrajectory.
double ade(const std::vector<Vec3>& predicted, const std::vector<Vec3>& truth);
/// Distance between the last points. Same errors as ade().
double fde(const std::vector<Vec3>& predicted, const std::vector<Vec3>& truth);

struct TrajectoryPair {
  std::string scene_id;
  std::int64_t frame_id = 0;
  std::vector<Vec3> predicted;
  std::vector<Vec3> ground_truth;
  std::string gt_caption;
  std::string predicted_caption;
};

struct EvalResult {
  double ade = 0.0;
  double fde = 0.0;
  std::size_t count = 0;
};

/// Per-pair ADE/FDE averaged over pairs.
EvalResult evaluate(const std::vector<TrajectoryPair>& pairs);

struct SplitSpec {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
  std::uint64_t seed = 0;
  int frame_stride = 10;  // 20 Hz -> 2 Hz

  void validate() const;
};

struct SceneSplit {
  std::vector<std::string> train, val, test;
};

/// Seeded shuffle of the sorted ids; the first round(0.70 n) go to train, the
/// next round(0.15 n) to val, the rest to test.
SceneSplit split_scenes(std::vector<std::string> scene_ids, const SplitSpec& spec);

struct SceneRecords {
  std::string scene_id;
  std::vector<FrameRecord> records;  // in frame order, first = scene start
};

struct SampledFrame {
  std::size_t scene = 0;  // index into the input scenes
  std::size_t frame = 0;  // index into that scene's records
};

struct DatasetSplit {
  SceneSplit scenes;
  std::vector<SampledFrame> train, val, test;
};

/// Scene-level split, then every `frame_stride`-th frame of each scene with a
/// full 60-point trajectory.
DatasetSplit split_and_subsample(const std::vector<SceneRecords>& scenes, const SplitSpec& spec);

struct BaselineConfig {
  double wheelbase = 2.7;       // m
  double steering_ratio = 15.0;  // steering wheel angle / road wheel angle
};

/// Constant speed and yaw rate arc evaluated at the subsample times.
std::vector<Vec3> baseline_arc(double speed, double yaw_rate);

/// Bicycle-model yaw rate from vEgo and steeringAngleDeg, then baseline_arc.
std::vector<Vec3> baseline_predict(const FrameRecord& record, const BaselineConfig& cfg = {});

/// Lowercase alphanumeric runs.
std::vector<std::string> tokenize(const std::string& text);

const std::set<std::string>& default_stopwords();

struct WordAttribution {
  std::string word;
  double mean_ade = 0.0;
  double mean_fde = 0.0;
  std::int64_t frequency = 0;
};

struct AttributionReport {
  std::vector<WordAttribution> by_ade;  // mean ADE descending, ties by word
  std::vector<WordAttribution> by_fde;  // mean FDE descending, ties by word
};

/// Words present in exactly one of (rule part of the ground-truth caption,
/// predicted caption), with the mean errors of those pairs. Stopwords and
/// words seen in min_freq pairs or fewer are dropped. top_k = 0 keeps all.
AttributionReport word_attribution(const std::vector<TrajectoryPair>& pairs,
                                   const std::set<std::string>& stopwords = default_stopwords(),
                                   std::int64_t min_freq = 10, std::size_t top_k = 0);

/// Rows `word,mean_ade,mean_fde,frequency`.
std::string attribution_csv(const std::vector<WordAttribution>& rows);

struct Prediction {
  std::string scene_id;  // may be empty
  std::int64_t frame_id = 0;
  std::vector<Vec3> trajectory;
  std::string caption;
};

/// JSONL with `frame_id`, `trajectory` (10 x 3) and optional `scene_id`,
/// `caption`. Throws SchemaViolation.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace vlagen
