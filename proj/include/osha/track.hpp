#pragma once

#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "osha/types.hpp"

namespace osha {

// Looped highway centerline built from straights and circular arcs.
// Lateral offsets are positive to the left of travel; lane 0 is the
// rightmost lane.

struct TrackPiece {
  double length = 0.0;     // arclength, meters
  double curvature = 0.0;  // 1/R signed (+ = turning left), 0 = straight
  // filled in by finalize():
  double start_s = 0.0;
  Pose start_pose;
};

struct SpeedSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  double limit = 0.0; // m/s
};

inline double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

class Track {
 public:
  std::string name;
  int lane_count = 3;
  double lane_width = 3.5;
  std::vector<TrackPiece> pieces;
  std::vector<SpeedSegment> segments;

  double length() const { return length_; }

  void finalize() {
    double s = 0.0;
    Pose pose;
    for (auto& p : pieces) {
      p.start_s = s;
      p.start_pose = pose;
      pose = advance(pose, p.curvature, p.length);
      s += p.length;
    }
    length_ = s;
    // the loop must close
    if (std::hypot(pose.x, pose.y) > 1e-6 || std::fabs(wrap_angle(pose.heading)) > 1e-9)
      throw std::runtime_error("Track '" + name + "' does not close");
    if (segments.empty() || std::fabs(segments.back().end_s - length_) > 1e-9 ||
        segments.front().start_s != 0.0)
      throw std::runtime_error("Track '" + name + "' speed segments do not partition the loop");
  }

  double wrap_s(double s) const {
    s = std::fmod(s, length_);
    return s < 0.0 ? s + length_ : s;
  }

  Pose pose_at(double s) const {
    s = wrap_s(s);
    const TrackPiece& p = piece_at(s);
    return advance(p.start_pose, p.curvature, s - p.start_s);
  }

  // Global position of a point at arclength s with lateral offset (left +).
  Vec2 position(double s, double lateral) const {
    const Pose p = pose_at(s);
    return {p.x - lateral * std::sin(p.heading), p.y + lateral * std::cos(p.heading)};
  }

  double lane_center(int lane) const {
    return (lane - 0.5 * (lane_count - 1)) * lane_width;
  }

  double speed_limit(double s) const {
    s = wrap_s(s);
    for (const auto& seg : segments)
      if (s >= seg.start_s && s < seg.end_s) return seg.limit;
    return segments.back().limit;
  }

  // Signed arclength from a to b going forward, in [0, length).
  double forward_gap(double a, double b) const {
    double d = wrap_s(b) - wrap_s(a);
    return d < 0.0 ? d + length_ : d;
  }

 private:
  double length_ = 0.0;

  const TrackPiece& piece_at(double s) const {
    // pieces are few; linear scan is fine
    for (const auto& p : pieces)
      if (s >= p.start_s && s < p.start_s + p.length) return p;
    return pieces.back();
  }

  static Pose advance(Pose p, double curvature, double ds) {
    if (std::fabs(curvature) < 1e-12)
      return {p.x + ds * std::cos(p.heading), p.y + ds * std::sin(p.heading), p.heading};
    const double r = 1.0 / curvature;
    const double dh = curvature * ds;
    return {p.x + r * (std::sin(p.heading + dh) - std::sin(p.heading)),
            p.y - r * (std::cos(p.heading + dh) - std::cos(p.heading)),
            wrap_angle(p.heading + dh)};
  }
};

namespace detail {

inline std::vector<SpeedSegment> make_segments(double total,
                                               const std::vector<double>& limits_kmh) {
  std::vector<SpeedSegment> segs;
  const double step = total / limits_kmh.size();
  for (std::size_t i = 0; i < limits_kmh.size(); ++i) {
    const double end = (i + 1 == limits_kmh.size()) ? total : (i + 1) * step;
    segs.push_back({i * step, end, limits_kmh[i] * kKmhToMs});
  }
  return segs;
}

} // namespace detail

// ~4 km stadium loop used for data collection.
inline Track training_track() {
  Track t;
  t.name = "training";
  t.lane_count = 3;
  t.lane_width = 3.5;
  const double r = 1000.0 / std::numbers::pi; // semicircle arclength 1000 m
  t.pieces = {
      {1000.0, 0.0}, {1000.0, 1.0 / r}, {1000.0, 0.0}, {1000.0, 1.0 / r}};
  t.segments = detail::make_segments(4000.0, {60, 80, 40, 70, 30, 50, 80, 60});
  t.finalize();
  return t;
}

// Evaluation loop with a different curvature sequence and segment layout.
inline Track evaluation_track() {
  Track t;
  t.name = "evaluation";
  t.lane_count = 3;
  t.lane_width = 3.5;
  const double r = 150.0;
  const double q = 0.5 * std::numbers::pi * r; // quarter arc, ~235.6 m
  t.pieces = {
      {900.0, 0.0}, {q, 1.0 / r}, {500.0, 0.0}, {q, 1.0 / r},
      {900.0, 0.0}, {q, 1.0 / r}, {500.0, 0.0}, {q, 1.0 / r}};
  const double total = 2.0 * (900.0 + 500.0) + 4.0 * q;
  t.segments = detail::make_segments(total, {50, 70, 80, 30, 60, 40, 80, 70, 50});
  t.finalize();
  return t;
}

inline Track track_by_name(const std::string& name) {
  if (name == "training") return training_track();
  if (name == "evaluation") return evaluation_track();
  throw std::invalid_argument("unknown track: " + name);
}

} // namespace osha
