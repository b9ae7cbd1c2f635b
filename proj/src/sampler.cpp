#include "vlagen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vlagen/errors.hpp"

namespace vlagen {

void BinningConfig::validate() const {
  auto ascending = [](const std::vector<double>& e) {
    return std::adjacent_find(e.begin(), e.end(), std::greater_equal<>()) == e.end();
  };
  if (!ascending(steering_edges) || !ascending(accel_edges)) {
    throw ConfigError("bin edges must be strictly ascending");
  }
}

std::size_t BinningConfig::cell_count() const {
  return (steering_edges.size() + 1) * (accel_edges.size() + 1) *
         (ternary_turn_signal ? 3 : 2);
}

std::size_t bin_index(double value, std::span<const double> edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), value) -
                                  edges.begin());
}

std::size_t cell_of(const SceneFeatures& f, const BinningConfig& bins) {
  const std::size_t s = bin_index(f.max_abs_steering, bins.steering_edges);
  const std::size_t a = bin_index(f.max_abs_accel, bins.accel_edges);
  std::size_t turn = 0;
  if (bins.ternary_turn_signal) {
    if (f.turn_signal_used) turn = f.left_signal_frames >= f.right_signal_frames ? 1 : 2;
    return (s * (bins.accel_edges.size() + 1) + a) * 3 + turn;
  }
  turn = f.turn_signal_used ? 1 : 0;
  return (s * (bins.accel_edges.size() + 1) + a) * 2 + turn;
}

std::int64_t JointDistribution::total() const {
  std::int64_t n = 0;
  for (const auto& [cell, c] : counts) n += c;
  return n;
}

JointDistribution joint_distribution(std::span<const SceneFeatures> features,
                                     const BinningConfig& bins, double delta) {
  JointDistribution d;
  d.delta = delta;
  for (const auto& f : features) ++d.counts[cell_of(f, bins)];
  return d;
}

std::string SceneCandidate::scene_id() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%06lld", static_cast<long long>(start_frame));
  return recording_id + buf;
}

bool SceneCandidate::overlaps(const SceneCandidate& other) const {
  return recording_id == other.recording_id && start_frame < other.start_frame + other.span &&
         other.start_frame < start_frame + span;
}

bool eligibility(std::span<const AlignedFrame> scene) {
  if (scene.size() != kSceneFrames) {
    throw WrongLength("a scene has exactly 600 frames, got " + std::to_string(scene.size()));
  }
  return std::all_of(scene.begin(), scene.end(), [](const AlignedFrame& f) {
    return f.can && f.can->gear == Gear::drive && f.can->v_ego <= kMaxEligibleSpeed &&
           f.gnss_available;
  });
}

SceneFeatures extract_features(std::span<const AlignedFrame> scene) {
  SceneFeatures f;
  for (const auto& a : scene) {
    if (!a.can) continue;
    f.max_abs_steering = std::max(f.max_abs_steering, std::abs(a.can->steering_angle));
    f.max_abs_accel = std::max(f.max_abs_accel, std::abs(a.can->a_ego));
    f.max_speed = std::max(f.max_speed, a.can->v_ego);
    f.left_signal_frames += a.can->left_blinker ? 1 : 0;
    f.right_signal_frames += a.can->right_blinker ? 1 : 0;
  }
  f.turn_signal_used = f.left_signal_frames > 0 || f.right_signal_frames > 0;
  return f;
}

std::vector<double> weights(std::span<const SceneFeatures> features,
                            const BinningConfig& bins, double delta) {
  const JointDistribution dist = joint_distribution(features, bins, delta);
  std::vector<double> w;
  w.reserve(features.size());
  double total = 0.0;
  for (const auto& f : features) {
    const double raw = 1.0 / (static_cast<double>(dist.counts.at(cell_of(f, bins))) + delta);
    w.push_back(raw);
    total += raw;
  }
  for (auto& x : w) x /= total;
  return w;
}

std::vector<SceneCandidate> enumerate_candidates(const std::string& recording_id,
                                                 std::span<const AlignedFrame> frames) {
  std::vector<SceneCandidate> out;
  for (std::size_t start = 0; start + kSceneFrames <= frames.size(); start += kSceneFrames) {
    SceneCandidate c;
    c.recording_id = recording_id;
    c.start_frame = static_cast<std::int64_t>(start);
    const auto scene = frames.subspan(start, kSceneFrames);
    c.eligible = eligibility(scene);
    c.features = extract_features(scene);
    out.push_back(std::move(c));
  }
  return out;
}

void assign_weights(std::vector<SceneCandidate>& candidates, const BinningConfig& bins,
                    double delta) {
  std::vector<SceneFeatures> feats;
  for (const auto& c : candidates)
    if (c.eligible) feats.push_back(c.features);
  if (feats.empty()) return;
  const auto w = weights(feats, bins, delta);
  std::size_t k = 0;
  for (auto& c : candidates) c.weight = c.eligible ? w[k++] : 0.0;
}

double open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<SceneCandidate> sample_scenes(const std::vector<SceneCandidate>& candidates,
                                          std::size_t n, std::uint64_t seed) {
  struct Keyed {
    double log_key;
    std::string id;
    const SceneCandidate* candidate;
  };
  std::vector<Keyed> keyed;
  for (const auto& c : candidates) {
    if (!c.eligible || !(c.weight > 0.0)) continue;
    // Each candidate's uniform depends only on (seed, scene id), so the
    // selection does not depend on candidate order.
    const std::string id = c.scene_id();
    const double u = open_unit(splitmix64(seed ^ splitmix64(fnv1a(id))));
    keyed.push_back({std::log(u) / c.weight, id, &c});
  }
  if (n > keyed.size()) {
    throw NotEnoughScenes("requested " + std::to_string(n) + " scenes but only " +
                          std::to_string(keyed.size()) + " are eligible");
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.log_key != b.log_key) return a.log_key > b.log_key;
    return a.id < b.id;
  });

  std::vector<SceneCandidate> picked;
  for (const auto& k : keyed) {
    if (picked.size() == n) break;
    const bool clash = std::any_of(picked.begin(), picked.end(), [&](const SceneCandidate& p) {
      return p.overlaps(*k.candidate);
    });
    if (!clash) picked.push_back(*k.candidate);
  }
  if (picked.size() < n) {
    throw NotEnoughScenes("only " + std::to_string(picked.size()) +
                          " non-overlapping eligible scenes for " + std::to_string(n));
  }
  return picked;
}

Histogram make_histogram(std::span<const double> values, std::span<const double> edges) {
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() + 1, 0);
  for (double v : values) ++h.counts[bin_index(v, edges)];
  h.valid = !values.empty();
  if (h.valid) {
    const double total = static_cast<double>(values.size());
    for (auto c : h.counts) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / total;
      h.entropy -= p * std::log(p);
    }
  }
  return h;
}

DistributionReport distribution_report(std::span<const SceneCandidate> before,
                                       std::span<const SceneCandidate> after,
                                       const BinningConfig& bins) {
  auto speeds = [](std::span<const SceneCandidate> s) {
    std::vector<double> v;
    for (const auto& c : s) v.push_back(c.features.max_speed * 3.6);
    return v;
  };
  auto steering = [](std::span<const SceneCandidate> s) {
    std::vector<double> v;
    for (const auto& c : s) v.push_back(c.features.max_abs_steering);
    return v;
  };
  DistributionReport r;
  r.speed_before = make_histogram(speeds(before), kSpeedEdgesKmh);
  r.speed_after = make_histogram(speeds(after), kSpeedEdgesKmh);
  r.steering_before = make_histogram(steering(before), bins.steering_edges);
  r.steering_after = make_histogram(steering(after), bins.steering_edges);
  return r;
}

std::string DistributionReport::to_csv() const {
  std::ostringstream out;
  out << "histogram,stage,bin,lower,upper,count\n";
  auto emit = [&](const char* name, const char* stage, const Histogram& h) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      out << name << ',' << stage << ',' << i << ',';
      if (i > 0) out << h.edges[i - 1];
      out << ',';
      if (i < h.edges.size()) out << h.edges[i];
      out << ',' << h.counts[i] << '\n';
    }
  };
  emit("speed_kmh", "before", speed_before);
  emit("speed_kmh", "after", speed_after);
  emit("abs_steering_deg", "before", steering_before);
  emit("abs_steering_deg", "after", steering_after);
  return out.str();
}

}  // namespace vlagen
