#pragma once

#include <vector>

#include "osha/sim.hpp"
#include "osha/travel_assist.hpp"
#include "osha/types.hpp"

namespace osha {

// One step of a closed-loop run, handed to the caller after integration.
struct StepRecord {
  int step = 0;
  EgoState ego;                     // observation before the step, with command
  std::vector<ObjectState> objects;
  TAState ta_state = TAState::None; // controller state before the step
  TAOutput control;
  std::vector<Event> events;
};

// Drives sim + Travel Assist in lockstep. `policy` produces the TAInput per
// step; `on_step` may return false to stop early.
template <typename PolicyFn, typename OnStep>
int run_episode(Simulator& sim, TravelAssist& ta, int max_steps, PolicyFn&& policy,
                OnStep&& on_step) {
  int step = 0;
  for (; step < max_steps; ++step) {
    auto [ego, objects] = sim.observe();
    const TAState ta_before = ta.state();
    const TAInput input = policy(step, ego, objects, ta_before);
    ego.command = input.lane_request;
    const TAOutput control = ta.step(ego, input, objects, step);
    if (control.lane_committed >= 0) sim.set_ego_lane(control.lane_committed);
    auto events = sim.step({control.accel, control.lateral});
    StepRecord rec{step, std::move(ego), std::move(objects), ta_before, control,
                   std::move(events)};
    if (!on_step(rec)) return step + 1;
  }
  return step;
}

} // namespace osha
