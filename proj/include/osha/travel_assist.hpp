#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "osha/types.hpp"

namespace osha {

struct TAInput {
  LaneChangeCommand lane_request = LaneChangeCommand::KeepLane; // 3-valued
  double target_speed = 0.0; // m/s
};

struct TAOutput {
  double accel = 0.0;
  double lateral = 0.0;      // absolute lateral offset command
  int lane_committed = -1;   // set on Success: the new ego lane
};

struct TATransition {
  int step = 0;
  TAState from = TAState::None;
  TAState to = TAState::None;
};

// Pure successor function for the 7-state machine. Exactly one successor per
// (state, flags) combination; the flags irrelevant to a state are ignored.
inline TAState ta_transition(TAState state, bool change_requested, bool lane_exists,
                             bool signaling_done, bool safety_ok, bool movement_done) {
  switch (state) {
    case TAState::None:
      if (!change_requested) return TAState::None;
      return lane_exists ? TAState::Instantiated : TAState::Failed;
    case TAState::Instantiated:
      return signaling_done ? TAState::ReadyToChange : TAState::Instantiated;
    case TAState::ReadyToChange:
      return safety_ok ? TAState::StartMovement : TAState::Interrupted;
    case TAState::StartMovement:
      return movement_done ? TAState::Success : TAState::StartMovement;
    case TAState::Interrupted:
      return TAState::Failed;
    case TAState::Failed:
      return TAState::None;
    case TAState::Success:
      return TAState::None;
  }
  return TAState::None;
}

// Longitudinal ACC command: free-road speed tracking plus headway keeping,
// clamped to [-4, 2] m/s^2.
inline double acc_step(const EgoState& ego, const ObjectState* lead, double target_speed) {
  const double vd = std::max(target_speed, 0.1);
  double acc = 2.0 * (1.0 - std::pow(ego.v / vd, 4.0));
  if (lead && lead->present) {
    const double gap = std::max(lead->x - 0.5 * lead->length - 0.5 * 4.5, 0.05);
    const double dv = ego.v - lead->v;
    double sstar = 2.0 + ego.v * 1.5 + ego.v * dv / (2.0 * std::sqrt(2.0 * 3.0));
    sstar = std::max(sstar, 2.0);
    acc -= 2.0 * (sstar / gap) * (sstar / gap);
  }
  return std::clamp(acc, -4.0, 2.0);
}

class TravelAssist {
 public:
  TravelAssist(int lane_count, double lane_width)
      : lane_count_(lane_count), lane_width_(lane_width) {}

  static constexpr int kSignalingSteps = 20;    // 0.4 s
  static constexpr double kManeuverTime = 2.0;  // s, lateral profile duration

  TAState state() const { return state_; }
  const std::vector<TATransition>& log() const { return log_; }
  void clear_log() { log_.clear(); }

  // One controller tick at 50 Hz. `objects` are ego-local observations.
  TAOutput step(const EgoState& ego, const TAInput& in,
                const std::vector<ObjectState>& objects, int step_index) {
    TAOutput out;

    const bool change_requested =
        state_ == TAState::None && (in.lane_request == LaneChangeCommand::Left ||
                                    in.lane_request == LaneChangeCommand::Right);
    int requested_lane = ego.lane_id;
    bool lane_exists = false;
    if (change_requested) {
      requested_lane = ego.lane_id + (in.lane_request == LaneChangeCommand::Left ? 1 : -1);
      lane_exists = requested_lane >= 0 && requested_lane < lane_count_;
    }
    const bool signaling_done = state_ == TAState::Instantiated && timer_ <= 1;
    const bool safety_ok =
        state_ == TAState::ReadyToChange && target_lane_safe(ego, objects);
    const bool movement_done =
        state_ == TAState::StartMovement &&
        progress_ + kSimDt / kManeuverTime >= 1.0;

    const TAState next = ta_transition(state_, change_requested, lane_exists,
                                       signaling_done, safety_ok, movement_done);

    // entry actions
    if (state_ == TAState::None && next == TAState::Instantiated) {
      timer_ = kSignalingSteps;
      from_lane_ = ego.lane_id;
      target_lane_ = requested_lane;
      command_step_ = step_index;
    } else if (state_ == TAState::Instantiated && next == TAState::Instantiated) {
      --timer_;
    } else if (next == TAState::StartMovement && state_ == TAState::ReadyToChange) {
      progress_ = 0.0;
    }

    if (state_ == TAState::StartMovement) progress_ += kSimDt / kManeuverTime;

    if (next != state_) log_.push_back({step_index, state_, next});
    state_ = next;

    // lateral command
    if (state_ == TAState::StartMovement ||
        (state_ == TAState::Success && progress_ >= 1.0)) {
      const double from = lane_center(from_lane_);
      const double to = lane_center(target_lane_);
      const double f =
          0.5 * (1.0 - std::cos(std::numbers::pi * std::min(progress_, 1.0)));
      out.lateral = from + f * (to - from);
    } else {
      out.lateral = lane_center(hold_lane(ego));
    }
    if (state_ == TAState::Success) out.lane_committed = target_lane_;

    // longitudinal command: follow the closest relevant lead
    const ObjectState* lead = nearest_lead(ego, objects, ego.lane_id);
    if (state_ == TAState::StartMovement || state_ == TAState::Success) {
      const ObjectState* lead2 = nearest_lead(ego, objects, target_lane_);
      if (!lead || (lead2 && lead2->x < lead->x)) lead = lead2;
    }
    const double cap = std::min(in.target_speed, kMaxEgoSpeed);
    out.accel = acc_step(ego, lead, cap);
    return out;
  }

  int command_step() const { return command_step_; }

 private:
  int lane_count_;
  double lane_width_;
  TAState state_ = TAState::None;
  int timer_ = 0;
  int from_lane_ = 0;
  int target_lane_ = 0;
  double progress_ = 0.0;
  int command_step_ = -1;
  std::vector<TATransition> log_;

  double lane_center(int lane) const {
    return (lane - 0.5 * (lane_count_ - 1)) * lane_width_;
  }

  int hold_lane(const EgoState& ego) const {
    // after Success the ego lane id is already the target lane
    return state_ == TAState::Instantiated || state_ == TAState::ReadyToChange
               ? from_lane_
               : ego.lane_id;
  }

  static const ObjectState* nearest_lead(const EgoState&, const std::vector<ObjectState>& objs,
                                         int lane) {
    const ObjectState* best = nullptr;
    for (const auto& o : objs) {
      if (!o.present || o.lane_id != lane || o.x <= 0.0) continue;
      if (!best || o.x < best->x) best = &o;
    }
    return best;
  }

  // Internal safety gate evaluated in ReadyToChange: front/rear TTC > 2.5 s
  // and gaps > 5 m + half vehicle lengths in the target lane.
  bool target_lane_safe(const EgoState& ego, const std::vector<ObjectState>& objs) const {
    for (const auto& o : objs) {
      if (!o.present || o.lane_id != target_lane_) continue;
      const double half = 0.5 * (o.length + 4.5);
      const double gap = std::fabs(o.x) - half;
      if (gap < 5.0) return false; // includes the parallel-vehicle case
      if (o.x > 0.0) {
        const double closing = ego.v - o.v;
        if (closing > 0.0 && gap / closing < 2.5) return false;
      } else {
        const double closing = o.v - ego.v;
        if (closing > 0.0 && gap / closing < 2.5) return false;
      }
    }
    return true;
  }
};

} // namespace osha
