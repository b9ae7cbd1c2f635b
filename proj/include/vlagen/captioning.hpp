#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vlagen/estimation.hpp"
#include "vlagen/ingest.hpp"
#include "vlagen/vlm.hpp"

namespace vlagen {

enum class Blinker { none, left, right };

struct FrameContext {
  double speed = 0.0;  // m/s
  double accel = 0.0;  // m/s^2
  /// Signed curvature (1/m, positive left); empty when the frame's trajectory
  /// is missing, incomplete or rejected.
  std::optional<double> curvature;
  std::optional<LeadVehicleObs> lead;
  std::optional<TrafficLightObs> traffic_light;
  Blinker blinker = Blinker::none;
};

struct CaptionThresholds {
  double stopped_speed = 0.5;        // m/s
  double accel_band = 0.5;           // m/s^2
  double slow_kmh = 30.0;
  double moderate_kmh = 60.0;
  double straight_curvature = 0.002;  // 1/m
  double turning_curvature = 0.01;    // 1/m
};

enum class ClauseTag { motion, steering, lead, light, signal };

const char* to_string(ClauseTag t);

struct RuleCaption {
  std::string text;
  std::vector<ClauseTag> clauses;
};

/// Total heading change divided by the arc length between the midpoints of
/// the first and last segments; 0 for paths shorter than 1 m.
/// Throws IncompleteTrajectory unless the trajectory has 60 points.
double curvature(const EgoTrajectory& traj);

RuleCaption rule_caption(const FrameContext& ctx, const CaptionThresholds& th = {});

/// True if `sentence` was produced by one of the rule templates.
bool is_rule_sentence(const std::string& sentence);

/// The leading rule-template sentences of a combined caption.
std::string split_rule_part(const std::string& combined);

inline constexpr int kWindowFrames = 60;
inline constexpr int kWindowsPerScene = 10;
inline constexpr std::array<int, 8> kRepresentativeOffsets{0, 8, 17, 25, 34, 42, 51, 59};

struct CaptionWindow {
  int window_index = 0;
  int start = 0;  // scene-relative frame index
  int end = 0;    // exclusive
  std::array<int, 8> representatives{};  // scene-relative, sorted

  bool contains(int frame) const { return frame >= start && frame < end; }
};

/// Ten contiguous 60-frame windows. Throws WrongLength unless scene_frames
/// is 600.
std::vector<CaptionWindow> make_windows(int scene_frames);

struct Attribute {
  std::string value;
  double probability = 0.0;
};

struct AttributeSet {
  Attribute road_width;       // narrow | wide
  Attribute highway;          // highway | non-highway
  Attribute tunnel;           // tunnel | non-tunnel
  Attribute weather;          // sunny | cloudy | rainy
  Attribute pedestrian_risk;  // yes | no
};

struct AttributeQuery {
  std::string name;
  std::string query;
  std::vector<std::string> candidates;
};

/// Query strings and candidate tokens, in AttributeSet member order.
const std::vector<AttributeQuery>& default_attribute_queries();

/// Asks each attribute query and keeps the most probable candidate; ties go
/// to the earlier candidate. Throws MalformedResponse when a candidate is
/// missing or a probability is out of range.
AttributeSet extract_attributes(const std::vector<std::string>& frames, VlmClient& client,
                                const std::vector<AttributeQuery>& queries =
                                    default_attribute_queries());

std::string attribute_sentence(const AttributeSet& attrs);

struct VlmCaption {
  int window_index = 0;
  std::string free_text;
  std::optional<AttributeSet> attributes;
};

/// Rule captions of the representative frames joined by single spaces.
std::string rule_digest(const std::vector<RuleCaption>& representative_rules);

std::string build_caption_prompt(const std::string& rule_digest, const AttributeSet& attrs);

/// Throws EmptyCompletion for a blank reply; VlmUnavailable propagates.
VlmCaption augment_caption(const CaptionWindow& window, const std::vector<std::string>& frames,
                           const std::string& rule_digest, const AttributeSet& attrs,
                           VlmClient& client);

/// Rule text, attribute sentence, free text; empty parts are skipped.
/// Throws WindowMismatch when `frame` is outside `window`.
std::string compose_frame_caption(int frame, const RuleCaption& rule,
                                  const CaptionWindow& window, const VlmCaption& caption);

}  // namespace vlagen
