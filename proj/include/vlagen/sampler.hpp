#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vlagen/ingest.hpp"

namespace vlagen {

inline constexpr int kSceneFrames = 600;  // 30 s at 20 FPS
inline constexpr double kMaxEligibleSpeed = 100.0 / 3.6;  // m/s
inline constexpr double kDefaultSmoothing = 50.0;

struct SceneFeatures {
  double max_abs_steering = 0.0;  // deg
  double max_abs_accel = 0.0;     // m/s^2
  bool turn_signal_used = false;
  int left_signal_frames = 0;
  int right_signal_frames = 0;
  double max_speed = 0.0;  // m/s, reported only
};

struct BinningConfig {
  std::vector<double> steering_edges{5, 15, 45, 90, 180, 360, 540};
  std::vector<double> accel_edges{0.5, 1.0, 2.0, 3.0};
  /// Turn-signal dimension as {none, left, right} instead of {off, on}.
  bool ternary_turn_signal = false;

  void validate() const;
  std::size_t cell_count() const;
};

/// Bin index of `value` against ascending edges: values below edges[0] land
/// in bin 0, values at or above edges.back() in the last bin.
std::size_t bin_index(double value, std::span<const double> edges);
std::size_t cell_of(const SceneFeatures& f, const BinningConfig& bins);

struct JointDistribution {
  std::map<std::size_t, std::int64_t> counts;
  double delta = kDefaultSmoothing;

  std::int64_t total() const;
};

JointDistribution joint_distribution(std::span<const SceneFeatures> features,
                                     const BinningConfig& bins,
                                     double delta = kDefaultSmoothing);

struct SceneCandidate {
  std::string recording_id;
  std::int64_t start_frame = 0;  // index into the recording's frames
  int span = kSceneFrames;
  SceneFeatures features;
  bool eligible = false;
  double weight = 0.0;

  std::string scene_id() const;
  bool overlaps(const SceneCandidate& other) const;
};

/// Drive gear, speed <= 100 km/h and GNSS available on every frame.
/// Throws WrongLength unless there are exactly 600 frames.
bool eligibility(std::span<const AlignedFrame> scene);

SceneFeatures extract_features(std::span<const AlignedFrame> scene);

/// 1 / (count(cell) + delta) per scene, normalized to sum to one.
std::vector<double> weights(std::span<const SceneFeatures> features,
                            const BinningConfig& bins, double delta = kDefaultSmoothing);

/// Candidates on a non-overlapping 30 s grid over one recording.
std::vector<SceneCandidate> enumerate_candidates(const std::string& recording_id,
                                                 std::span<const AlignedFrame> frames);

/// Fills `weight` for eligible candidates (ineligible get 0).
void assign_weights(std::vector<SceneCandidate>& candidates, const BinningConfig& bins,
                    double delta = kDefaultSmoothing);

/// Uniform double in (0, 1) from the top 52 bits of a 64-bit draw.
double open_unit(std::uint64_t bits);

/// Weighted sampling without replacement with exponential keys u^(1/w);
/// the n largest keys win, skipping candidates that overlap an earlier pick
/// in the same recording. Throws NotEnoughScenes.
std::vector<SceneCandidate> sample_scenes(const std::vector<SceneCandidate>& candidates,
                                          std::size_t n, std::uint64_t seed);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::int64_t> counts;  // edges.size() + 1 bins
  double entropy = 0.0;  // nats, of the normalized counts
  bool valid = false;    // false for an empty input
};

Histogram make_histogram(std::span<const double> values, std::span<const double> edges);

struct DistributionReport {
  Histogram speed_before, speed_after;
  Histogram steering_before, steering_after;

  /// Rows `histogram,stage,bin,lower,upper,count` for plotting.
  std::string to_csv() const;
};

inline const std::vector<double> kSpeedEdgesKmh{10, 20, 30, 40, 50, 60, 70, 80, 90};

DistributionReport distribution_report(std::span<const SceneCandidate> before,
                                       std::span<const SceneCandidate> after,
                                       const BinningConfig& bins = {});

}  // namespace vlagen
