#include "vlagen/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "vlagen/errors.hpp"

namespace vlagen {

using jsonu::json;

std::vector<Vec3> subsample_trajectory(const std::vector<Vec3>& points) {
  if (points.size() != static_cast<std::size_t>(kTrajectoryLength)) {
    throw IncompleteTrajectory("need 60 points to subsample, got " +
                               std::to_string(points.size()));
  }
  std::vector<Vec3> out;
  out.reserve(kSubsampleIndices.size());
  for (int i : kSubsampleIndices) out.push_back(points[static_cast<std::size_t>(i)]);
  return out;
}

namespace {

void check_lengths(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size()) {
    throw LengthMismatch("trajectory lengths differ: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  if (a.empty()) throw EmptyTrajectory("cannot score an empty trajectory");
}

}  // namespace

double ade(const std::vector<Vec3>& predicted, const std::vector<Vec3>& truth) {
  check_lengths(predicted, truth);
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) sum += (truth[t] - predicted[t]).norm();
  return sum / static_cast<double>(truth.size());
}

double fde(const std::vector<Vec3>& predicted, const std::vector<Vec3>& truth) {
  check_lengths(predicted, truth);
  return (truth.back() - predicted.back()).norm();
}

EvalResult evaluate(const std::vector<TrajectoryPair>& pairs) {
  EvalResult r;
  for (const auto& p : pairs) {
    r.ade += ade(p.predicted, p.ground_truth);
    r.fde += fde(p.predicted, p.ground_truth);
  }
  r.count = pairs.size();
  if (r.count > 0) {
    r.ade /= static_cast<double>(r.count);
    r.fde /= static_cast<double>(r.count);
  }
  return r;
}

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  if (frame_stride < 1) throw ConfigError("frame_stride must be at least 1");
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SceneSplit split_scenes(std::vector<std::string> ids, const SplitSpec& spec) {
  spec.validate();
  std::sort(ids.begin(), ids.end());
  // Fisher-Yates with a fixed generator so the split is the same everywhere.
  std::uint64_t state = spec.seed;
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(splitmix64(state) % i);
    std::swap(ids[i - 1], ids[j]);
  }
  const auto n = static_cast<double>(ids.size());
  const auto n_train = std::min<std::size_t>(ids.size(), std::llround(spec.train * n));
  const auto n_val = std::min<std::size_t>(ids.size() - n_train, std::llround(spec.val * n));
  SceneSplit s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  return s;
}

DatasetSplit split_and_subsample(const std::vector<SceneRecords>& scenes, const SplitSpec& spec) {
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ids.push_back(scenes[i].scene_id);
    index[scenes[i].scene_id] = i;
  }
  DatasetSplit out;
  out.scenes = split_scenes(ids, spec);
  auto sample = [&](const std::vector<std::string>& part, std::vector<SampledFrame>& dst) {
    for (const auto& id : part) {
      const std::size_t s = index.at(id);
      const auto& recs = scenes[s].records;
      for (std::size_t f = 0; f < recs.size(); f += static_cast<std::size_t>(spec.frame_stride)) {
        if (recs[f].trajectory_count == kTrajectoryLength) dst.push_back({s, f});
      }
    }
  };
  sample(out.scenes.train, out.train);
  sample(out.scenes.val, out.val);
  sample(out.scenes.test, out.test);
  return out;
}

std::vector<Vec3> baseline_arc(double speed, double yaw_rate) {
  std::vector<Vec3> out;
  for (int i : kSubsampleIndices) {
    const double t = i / kFrameRateHz;
    if (std::abs(yaw_rate) < 1e-12) {
      out.emplace_back(speed * t, 0.0, 0.0);
    } else {
      const double r = speed / yaw_rate;
      out.emplace_back(r * std::sin(yaw_rate * t), r * (1.0 - std::cos(yaw_rate * t)), 0.0);
    }
  }
  return out;
}

std::vector<Vec3> baseline_predict(const FrameRecord& record, const BaselineConfig& cfg) {
  const double wheel = record.steeringAngleDeg / cfg.steering_ratio * M_PI / 180.0;
  return baseline_arc(record.vEgo, record.vEgo * std::tan(wheel) / cfg.wheelbase);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> kWords{
      "a", "about", "above", "after", "again", "all", "an", "and", "any", "are", "as", "at",
      "be", "been", "before", "being", "below", "between", "both", "but", "by", "can", "did",
      "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had",
      "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if",
      "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most", "my", "no",
      "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "out",
      "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the",
      "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
      "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where",
      "which", "while", "who", "whom", "why", "will", "with", "you", "your"};
  return kWords;
}

AttributionReport word_attribution(const std::vector<TrajectoryPair>& pairs,
                                   const std::set<std::string>& stopwords,
                                   std::int64_t min_freq, std::size_t top_k) {
  struct Acc {
    double ade = 0.0, fde = 0.0;
    std::int64_t n = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& p : pairs) {
    const auto gt_words = tokenize(split_rule_part(p.gt_caption));
    const auto pred_words = tokenize(p.predicted_caption);
    const std::set<std::string> gt(gt_words.begin(), gt_words.end());
    const std::set<std::string> pred(pred_words.begin(), pred_words.end());
    std::vector<std::string> diff;
    std::set_symmetric_difference(gt.begin(), gt.end(), pred.begin(), pred.end(),
                                  std::back_inserter(diff));
    if (diff.empty()) continue;
    const double a = ade(p.predicted, p.ground_truth);
    const double f = fde(p.predicted, p.ground_truth);
    for (const auto& w : diff) {
      auto& x = acc[w];
      x.ade += a;
      x.fde += f;
      ++x.n;
    }
  }
  std::vector<WordAttribution> rows;
  for (const auto& [word, x] : acc) {
    if (stopwords.count(word) || x.n <= min_freq) continue;
    rows.push_back({word, x.ade / static_cast<double>(x.n), x.fde / static_cast<double>(x.n), x.n});
  }
  AttributionReport r;
  r.by_ade = rows;
  r.by_fde = rows;
  std::sort(r.by_ade.begin(), r.by_ade.end(), [](const auto& a, const auto& b) {
    return a.mean_ade != b.mean_ade ? a.mean_ade > b.mean_ade : a.word < b.word;
  });
  std::sort(r.by_fde.begin(), r.by_fde.end(), [](const auto& a, const auto& b) {
    return a.mean_fde != b.mean_fde ? a.mean_fde > b.mean_fde : a.word < b.word;
  });
  if (top_k > 0) {
    if (r.by_ade.size() > top_k) r.by_ade.resize(top_k);
    if (r.by_fde.size() > top_k) r.by_fde.resize(top_k);
  }
  return r;
}

std::string attribution_csv(const std::vector<WordAttribution>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "word,mean_ade,mean_fde,frequency\n";
  for (const auto& r : rows) {
    out << r.word << ',' << r.mean_ade << ',' << r.mean_fde << ',' << r.frequency << '\n';
  }
  return out.str();
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  const auto lines = jsonu::split_lines(jsonu::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) throw SchemaViolation(i + 1, "not valid JSON");
    Prediction p;
    try {
      p.frame_id = jsonu::integer(j, "frame_id");
      const auto& traj = jsonu::field(j, "trajectory");
      if (!traj.is_array() || traj.size() != kSubsampleIndices.size()) {
        throw jsonu::FieldError("'trajectory' must hold 10 points");
      }
      for (const auto& pt : traj) p.trajectory.push_back(jsonu::vec3(pt, "trajectory"));
      if (j.contains("scene_id")) p.scene_id = jsonu::string(j, "scene_id");
      if (j.contains("caption")) p.caption = jsonu::string(j, "caption");
    } catch (const jsonu::FieldError& e) {
      throw SchemaViolation(i + 1, e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace vlagen
