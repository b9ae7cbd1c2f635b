#include "vlagen/captioning.hpp"

#include <cmath>
#include <numbers>

#include "vlagen/errors.hpp"

namespace vlagen {

const char* to_string(ClauseTag t) {
  switch (t) {
    case ClauseTag::motion: return "motion";
    case ClauseTag::steering: return "steering";
    case ClauseTag::lead: return "lead";
    case ClauseTag::light: return "light";
    case ClauseTag::signal: return "signal";
  }
  return "motion";
}

double curvature(const EgoTrajectory& traj) {
  if (!traj.complete()) {
    throw IncompleteTrajectory("curvature needs a complete 60-point trajectory");
  }
  std::vector<double> headings;
  std::vector<double> lengths;
  double total = 0.0;
  for (std::size_t i = 1; i < traj.points.size(); ++i) {
    const double dx = traj.points[i].x() - traj.points[i - 1].x();
    const double dy = traj.points[i].y() - traj.points[i - 1].y();
    const double len = std::hypot(dx, dy);
    total += len;
    if (len < 1e-9) continue;
    headings.push_back(std::atan2(dy, dx));
    lengths.push_back(len);
  }
  if (total < 1.0 || headings.size() < 2) return 0.0;
  double turn = 0.0;
  for (std::size_t i = 1; i < headings.size(); ++i) {
    turn += wrap_angle(headings[i] - headings[i - 1]);
  }
  const double arc = total - 0.5 * (lengths.front() + lengths.back());
  return arc > 0.0 ? turn / arc : 0.0;
}

namespace {

const char* speed_band(double speed, const CaptionThresholds& th) {
  const double kmh = speed * 3.6;
  if (kmh < th.slow_kmh) return "slow";
  if (kmh < th.moderate_kmh) return "moderate";
  return "fast";
}

constexpr const char* kRulePrefixes[] = {
    "The ego vehicle is ",  "It is moving straight.", "It is following a curve to the ",
    "It is turning ",       "A leading vehicle is present ", "The traffic light is ",
    "A traffic light is ahead.", "The left turn signal is on.", "The right turn signal is on.",
};

}  // namespace

RuleCaption rule_caption(const FrameContext& ctx, const CaptionThresholds& th) {
  RuleCaption out;
  auto add = [&](ClauseTag tag, const std::string& sentence) {
    if (!out.text.empty()) out.text += ' ';
    out.text += sentence;
    out.clauses.push_back(tag);
  };

  const bool stopped = ctx.speed < th.stopped_speed;
  if (stopped) {
    add(ClauseTag::motion, "The ego vehicle is stopped.");
  } else {
    const std::string band = speed_band(ctx.speed, th);
    if (ctx.accel > th.accel_band) {
      add(ClauseTag::motion, "The ego vehicle is accelerating at a " + band + " speed.");
    } else if (ctx.accel < -th.accel_band) {
      add(ClauseTag::motion, "The ego vehicle is decelerating at a " + band + " speed.");
    } else {
      add(ClauseTag::motion, "The ego vehicle is moving at a constant " + band + " speed.");
    }
  }

  if (!stopped && ctx.curvature) {
    const double k = *ctx.curvature;
    const std::string side = k > 0.0 ? "left" : "right";
    if (std::abs(k) < th.straight_curvature) {
      add(ClauseTag::steering, "It is moving straight.");
    } else if (std::abs(k) <= th.turning_curvature) {
      add(ClauseTag::steering, "It is following a curve to the " + side + ".");
    } else {
      add(ClauseTag::steering, "It is turning " + side + ".");
    }
  }

  if (ctx.lead) {
    add(ClauseTag::lead, "A leading vehicle is present " +
                             std::to_string(std::lround(ctx.lead->longitudinal)) +
                             " meters ahead.");
  }

  if (ctx.traffic_light) {
    const auto& tl = *ctx.traffic_light;
    switch (tl.state) {
      case LightState::red:
      case LightState::yellow:
      case LightState::green:
        add(ClauseTag::light, std::string("The traffic light is ") + to_string(tl.state) + ".");
        break;
      case LightState::red_with_arrow:
        add(ClauseTag::light, tl.arrow == ArrowDirection::none
                                  ? std::string("The traffic light is red with an arrow.")
                                  : std::string("The traffic light is red with a ") +
                                        to_string(tl.arrow) + " arrow.");
        break;
      case LightState::unknown:
        add(ClauseTag::light, "A traffic light is ahead.");
        break;
    }
  }

  if (ctx.blinker == Blinker::left) add(ClauseTag::signal, "The left turn signal is on.");
  if (ctx.blinker == Blinker::right) add(ClauseTag::signal, "The right turn signal is on.");
  return out;
}

bool is_rule_sentence(const std::string& sentence) {
  for (const char* prefix : kRulePrefixes) {
    if (sentence.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

namespace {

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    while (start < text.size() && text[start] == ' ') ++start;
    if (start >= text.size()) break;
    std::size_t end = start;
    while (end < text.size() &&
           !((text[end] == '.' || text[end] == '!' || text[end] == '?') &&
             (end + 1 == text.size() || text[end + 1] == ' '))) {
      ++end;
    }
    end = std::min(end + 1, text.size());
    out.push_back(text.substr(start, end - start));
    start = end;
  }
  return out;
}

}  // namespace

std::string split_rule_part(const std::string& combined) {
  std::string out;
  for (const auto& s : split_sentences(combined)) {
    if (!is_rule_sentence(s)) break;
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

std::vector<CaptionWindow> make_windows(int scene_frames) {
  if (scene_frames != kWindowFrames * kWindowsPerScene) {
    throw WrongLength("caption windows need a 600-frame scene, got " +
                      std::to_string(scene_frames));
  }
  std::vector<CaptionWindow> out;
  for (int w = 0; w < kWindowsPerScene; ++w) {
    CaptionWindow win;
    win.window_index = w;
    win.start = w * kWindowFrames;
    win.end = win.start + kWindowFrames;
    for (std::size_t k = 0; k < kRepresentativeOffsets.size(); ++k) {
      win.representatives[k] = win.start + kRepresentativeOffsets[k];
    }
    out.push_back(win);
  }
  return out;
}

const std::vector<AttributeQuery>& default_attribute_queries() {
  static const std::vector<AttributeQuery> kQueries{
      {"road_width", "Is the road in this video narrow or wide?", {"narrow", "wide"}},
      {"highway", "Is the vehicle driving on a highway?", {"highway", "non-highway"}},
      {"tunnel", "Is the vehicle driving in a tunnel?", {"tunnel", "non-tunnel"}},
      {"weather", "What is the weather in this video?", {"sunny", "cloudy", "rainy"}},
      {"pedestrian_risk", "Are there pedestrians that pose a risk?", {"yes", "no"}},
  };
  return kQueries;
}

AttributeSet extract_attributes(const std::vector<std::string>& frames, VlmClient& client,
                                const std::vector<AttributeQuery>& queries) {
  AttributeSet attrs;
  std::array<Attribute*, 5> slots{&attrs.road_width, &attrs.highway, &attrs.tunnel,
                                  &attrs.weather, &attrs.pedestrian_risk};
  if (queries.size() != slots.size()) {
    throw ConfigError("expected exactly 5 attribute queries");
  }
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    const auto probs = client.attributes(frames, query.query, query.candidates);
    double sum = 0.0;
    std::optional<Attribute> best;
    for (const auto& cand : query.candidates) {
      auto it = probs.find(cand);
      if (it == probs.end()) {
        throw MalformedResponse("no probability for candidate '" + cand + "' of query '" +
                                query.query + "'");
      }
      const double p = it->second;
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        throw MalformedResponse("probability for '" + cand + "' is outside [0, 1]");
      }
      sum += p;
      if (!best || p > best->probability) best = Attribute{cand, p};
    }
    if (sum > 1.0 + 1e-9) throw MalformedResponse("candidate probabilities sum above 1");
    if (!best || !(best->probability > 0.0)) {
      throw MalformedResponse("all candidates of '" + query.query + "' have zero probability");
    }
    *slots[q] = *best;
  }
  return attrs;
}

std::string attribute_sentence(const AttributeSet& a) {
  return "Road: " + a.road_width.value + ", " + a.highway.value + ", " + a.tunnel.value +
         ". Weather: " + a.weather.value + ". Pedestrian risk: " + a.pedestrian_risk.value +
         ".";
}

std::string rule_digest(const std::vector<RuleCaption>& representative_rules) {
  std::string out;
  for (const auto& r : representative_rules) {
    if (!out.empty()) out += ' ';
    out += r.text;
  }
  return out;
}

std::string build_caption_prompt(const std::string& digest, const AttributeSet& attrs) {
  return "The following rule-based captions describe the video and are factual:\n" + digest +
         "\nKnown scene attributes: " + attribute_sentence(attrs) +
         "\nSupplement the captions with any additional information not already covered, "
         "focusing on potential risks in the driving environment.";
}

VlmCaption augment_caption(const CaptionWindow& window, const std::vector<std::string>& frames,
                           const std::string& digest, const AttributeSet& attrs,
                           VlmClient& client) {
  const std::string text = client.caption(frames, build_caption_prompt(digest, attrs));
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw EmptyCompletion("model returned an empty caption for window " +
                          std::to_string(window.window_index));
  }
  return {window.window_index, text, attrs};
}

std::string compose_frame_caption(int frame, const RuleCaption& rule,
                                  const CaptionWindow& window, const VlmCaption& caption) {
  if (!window.contains(frame) || caption.window_index != window.window_index) {
    throw WindowMismatch("frame " + std::to_string(frame) + " is not in window " +
                         std::to_string(window.window_index));
  }
  std::string out = rule.text;
  auto append = [&](const std::string& part) {
    if (part.empty()) return;
    if (!out.empty()) out += ' ';
    out += part;
  };
  if (caption.attributes) append(attribute_sentence(*caption.attributes));
  append(caption.free_text);
  return out;
}

}  // namespace vlagen
