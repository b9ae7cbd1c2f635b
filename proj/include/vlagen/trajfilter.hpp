#pragma once

#include <span>
#include <vector>

#include "vlagen/estimation.hpp"

namespace vlagen {

struct FilterThresholds {
  double max_speed_kmh = 100.0;
  double fps = 20.0;
  double tolerance = 1.15;
  /// Per-axis-summed variance of the moving-average residuals, m^2.
  double vibration_variance_threshold = 2.5e-3;
  int moving_average_window = 3;

  void validate() const;
};

enum class VerdictReason { ok, jump, vibration };

const char* to_string(VerdictReason r);

struct TrajectoryVerdict {
  bool valid = true;
  VerdictReason reason = VerdictReason::ok;
  /// Largest adjacent step (m) for jump checks, residual variance (m^2) for
  /// vibration checks.
  double metric = 0.0;
};

/// Largest plausible distance between adjacent samples, with tolerance.
double jump_threshold(const FilterThresholds& t = {});
/// Same without the tolerance factor.
double base_step(const FilterThresholds& t = {});

/// Invalid iff some adjacent-point distance strictly exceeds the threshold.
/// Throws TooShort for fewer than 2 points.
TrajectoryVerdict detect_jump(std::span<const Vec3> points,
                              const FilterThresholds& t = {});

/// Residuals against a centred moving average whose window shrinks
/// symmetrically at the ends. Throws TooShort for fewer than 3 points.
std::vector<Vec3> moving_average_residuals(std::span<const Vec3> points, int window);

/// Invalid iff the per-axis-summed residual variance strictly exceeds the
/// threshold. Throws TooShort for fewer than 3 points.
TrajectoryVerdict detect_vibration(std::span<const Vec3> points,
                                   const FilterThresholds& t = {});

/// Jump check, then vibration check, on every trajectory (prefixes of
/// incomplete ones included). Trajectories too short to test pass.
std::vector<TrajectoryVerdict> filter_recording(const std::vector<EgoTrajectory>& trajs,
                                                const FilterThresholds& t = {});

}  // namespace vlagen
