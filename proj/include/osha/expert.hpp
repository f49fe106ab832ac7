#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "osha/travel_assist.hpp"
#include "osha/types.hpp"

namespace osha {

// Time to collision: gap over closing speed, +inf when opening.
inline double ttc(double rel_pos, double rel_speed) {
  if (rel_speed <= 0.0) return std::numeric_limits<double>::infinity();
  return std::max(rel_pos, 0.0) / rel_speed;
}

struct NeighborSlot {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  int lane_id = 0;
  double length = 0.0;
  bool present = false;
};

// The six vehicles the rule-based driver observes: nearest front/rear in the
// current and adjacent lanes. Vehicles further out are ignored.
struct Neighborhood {
  NeighborSlot current_front, current_rear;
  NeighborSlot left_front, left_rear;
  NeighborSlot right_front, right_rear;
};

inline Neighborhood extract_neighborhood(const EgoState& ego,
                                         const std::vector<ObjectState>& objects) {
  Neighborhood n;
  auto update = [](NeighborSlot& slot, const ObjectState& o) {
    if (!slot.present || std::fabs(o.x) < std::fabs(slot.x)) {
      slot = {o.x, o.y, o.v, o.lane_id, o.length, true};
    }
  };
  for (const auto& o : objects) {
    if (!o.present) continue;
    const int rel = o.lane_id - ego.lane_id;
    const bool front = o.x > 0.0;
    if (rel == 0) {
      update(front ? n.current_front : n.current_rear, o);
    } else if (rel == 1 && ego.left_avail) {
      update(front ? n.left_front : n.left_rear, o);
    } else if (rel == -1 && ego.right_avail) {
      update(front ? n.right_front : n.right_rear, o);
    }
  }
  return n;
}

struct RuleThresholds {
  double front_ttc = 3.0;       // s
  double rear_ttc = 2.0;        // s
  double front_gap = 10.0;      // m
  double rear_gap = 7.0;        // m
  double blocked_speed = 0.9;   // fraction of limit
  double blocked_headway = 3.0; // s
  double right_tolerance = 0.5; // m/s, "as fast" margin for the right return
  double cooldown = 2.0;        // s between commands
};

struct RuleVerdict {
  bool safety = false;
  bool speed_gain = false;
  bool availability = false;
  LaneChangeCommand target = LaneChangeCommand::KeepLane;
};

struct ExpertTrace {
  bool blocked = false;
  double est_current = 0.0;
  double est_left = 0.0;
  double est_right = 0.0;
  RuleVerdict left, right;
  LaneChangeCommand decision = LaneChangeCommand::KeepLane;
};

class ExpertDriver {
 public:
  explicit ExpertDriver(RuleThresholds th = {}) : th_(th) {}

  const RuleThresholds& thresholds() const { return th_; }
  const ExpertTrace& last_trace() const { return trace_; }
  void reset() {
    cooldown_steps_ = 0;
    trace_ = {};
  }

  // Speed the ego could sustain behind `front` under the headway law.
  double estimate_speed(double limit, const NeighborSlot& front) const {
    if (!front.present) return limit;
    const double headway = front.x / std::max(1.0, front.v);
    if (headway > th_.blocked_headway) return limit;
    return std::min(limit, front.v);
  }

  // Safety + availability for a change toward the given side slots.
  bool side_safe(const EgoState& ego, const NeighborSlot& front,
                 const NeighborSlot& rear) const {
    if (front.present) {
      const double gap = front.x - 0.5 * (front.length + kEgoLength);
      if (gap < th_.front_gap) return false;
      if (ttc(gap, ego.v - front.v) < th_.front_ttc) return false;
    }
    if (rear.present) {
      const double gap = -rear.x - 0.5 * (rear.length + kEgoLength);
      if (gap < th_.rear_gap) return false;
      if (ttc(gap, rear.v - ego.v) < th_.rear_ttc) return false;
    }
    return true;
  }

  TAInput decide(const EgoState& ego, const Neighborhood& nbh, TAState ta_state) {
    const double limit = ego.s;
    trace_ = {};
    trace_.est_current = estimate_speed(limit, nbh.current_front);
    trace_.est_left = estimate_speed(limit, nbh.left_front);
    trace_.est_right = estimate_speed(limit, nbh.right_front);

    const NeighborSlot& cf = nbh.current_front;
    trace_.blocked = cf.present && cf.v < th_.blocked_speed * limit &&
                     cf.x / std::max(ego.v, 1.0) < th_.blocked_headway;

    trace_.left.availability = ego.left_avail;
    trace_.left.safety = ego.left_avail && side_safe(ego, nbh.left_front, nbh.left_rear);
    trace_.left.speed_gain = trace_.est_left > trace_.est_current;
    trace_.left.target = LaneChangeCommand::Left;

    trace_.right.availability = ego.right_avail;
    trace_.right.safety =
        ego.right_avail && side_safe(ego, nbh.right_front, nbh.right_rear);
    trace_.right.speed_gain =
        trace_.est_right >= trace_.est_current - th_.right_tolerance;
    trace_.right.target = LaneChangeCommand::Right;

    TAInput out;
    out.target_speed = std::min(limit, kMaxEgoSpeed);
    out.lane_request = LaneChangeCommand::KeepLane;

    if (cooldown_steps_ > 0) --cooldown_steps_;
    const bool can_command = ta_state == TAState::None && cooldown_steps_ == 0;

    if (can_command) {
      // keep-right goal: return right whenever the right lane is as fast
      if (trace_.right.availability && trace_.right.safety && trace_.right.speed_gain) {
        out.lane_request = LaneChangeCommand::Right;
      } else if (trace_.blocked && trace_.left.availability && trace_.left.safety &&
                 trace_.left.speed_gain) {
        out.lane_request = LaneChangeCommand::Left;
      }
      if (out.lane_request != LaneChangeCommand::KeepLane)
        cooldown_steps_ = static_cast<int>(th_.cooldown / kSimDt);
    }
    trace_.decision = out.lane_request;
    return out;
  }

 private:
  RuleThresholds th_;
  int cooldown_steps_ = 0;
  ExpertTrace trace_;
};

} // namespace osha
