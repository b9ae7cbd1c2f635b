#include "vlagen/trajfilter.hpp"

#include <algorithm>

#include "vlagen/errors.hpp"

namespace vlagen {

void FilterThresholds::validate() const {
  if (!(max_speed_kmh > 0.0) || !(fps > 0.0) || !(tolerance > 0.0) ||
      !(vibration_variance_threshold > 0.0) || moving_average_window <= 0) {
    throw ConfigError("filter thresholds must be positive");
  }
  if (moving_average_window % 2 == 0) {
    throw ConfigError("moving_average_window must be odd");
  }
}

const char* to_string(VerdictReason r) {
  switch (r) {
    case VerdictReason::ok: return "ok";
    case VerdictReason::jump: return "jump";
    case VerdictReason::vibration: return "vibration";
  }
  return "ok";
}

double base_step(const FilterThresholds& t) {
  return t.max_speed_kmh * 1000.0 / (3600.0 * t.fps);
}

double jump_threshold(const FilterThresholds& t) { return base_step(t) * t.tolerance; }

TrajectoryVerdict detect_jump(std::span<const Vec3> points, const FilterThresholds& t) {
  if (points.size() < 2) throw TooShort("jump detection needs at least 2 points");
  double max_step = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    max_step = std::max(max_step, (points[i] - points[i - 1]).norm());
  }
  TrajectoryVerdict v;
  v.metric = max_step;
  if (max_step > jump_threshold(t)) {
    v.valid = false;
    v.reason = VerdictReason::jump;
  }
  return v;
}

std::vector<Vec3> moving_average_residuals(std::span<const Vec3> points, int window) {
  if (points.size() < 3) throw TooShort("vibration detection needs at least 3 points");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(points.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<Vec3> residuals;
  residuals.reserve(points.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t h = std::min({half, i, n - 1 - i});
    Vec3 sum = Vec3::Zero();
    for (std::ptrdiff_t k = i - h; k <= i + h; ++k) sum += points[k];
    residuals.push_back(points[i] - sum / static_cast<double>(2 * h + 1));
  }
  return residuals;
}

TrajectoryVerdict detect_vibration(std::span<const Vec3> points, const FilterThresholds& t) {
  const auto residuals = moving_average_residuals(points, t.moving_average_window);
  const double n = static_cast<double>(residuals.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& r : residuals) mean += r;
  mean /= n;
  double variance = 0.0;
  for (const auto& r : residuals) variance += (r - mean).squaredNorm();
  variance /= n;

  TrajectoryVerdict v;
  v.metric = variance;
  if (variance > t.vibration_variance_threshold) {
    v.valid = false;
    v.reason = VerdictReason::vibration;
  }
  return v;
}

std::vector<TrajectoryVerdict> filter_recording(const std::vector<EgoTrajectory>& trajs,
                                                const FilterThresholds& t) {
  std::vector<TrajectoryVerdict> out;
  out.reserve(trajs.size());
  for (const auto& traj : trajs) {
    const std::span<const Vec3> pts(traj.points);
    TrajectoryVerdict v;
    if (pts.size() >= 2) {
      v = detect_jump(pts, t);
      if (v.valid && pts.size() >= 3) v = detect_vibration(pts, t);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace vlagen
