#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "osha/episode.hpp"
#include "osha/expert.hpp"
#include "osha/sim.hpp"
#include "osha/travel_assist.hpp"

using namespace osha;

TEST_CASE("transition table is exhaustive with unique successors") {
  const TAState states[] = {TAState::None,          TAState::Instantiated,
                            TAState::ReadyToChange, TAState::StartMovement,
                            TAState::Interrupted,   TAState::Success,
                            TAState::Failed};
  // allowed edges of the flowchart (self-loops are waiting states)
  const std::set<std::pair<TAState, TAState>> allowed = {
      {TAState::None, TAState::None},
      {TAState::None, TAState::Instantiated},
      {TAState::None, TAState::Failed},
      {TAState::Instantiated, TAState::Instantiated},
      {TAState::Instantiated, TAState::ReadyToChange},
      {TAState::ReadyToChange, TAState::StartMovement},
      {TAState::ReadyToChange, TAState::Interrupted},
      {TAState::StartMovement, TAState::StartMovement},
      {TAState::StartMovement, TAState::Success},
      {TAState::Interrupted, TAState::Failed},
      {TAState::Success, TAState::None},
      {TAState::Failed, TAState::None},
  };
  int checked = 0;
  for (TAState s : states)
    for (int bits = 0; bits < 32; ++bits) {
      const TAState next =
          ta_transition(s, bits & 1, bits & 2, bits & 4, bits & 8, bits & 16);
      CHECK(allowed.count({s, next}) == 1);
      ++checked;
    }
  CHECK(checked == 7 * 32);
}

TEST_CASE("command in None moves to Instantiated when the lane exists") {
  CHECK(ta_transition(TAState::None, true, true, false, false, false) ==
        TAState::Instantiated);
  CHECK(ta_transition(TAState::None, true, false, false, false, false) ==
        TAState::Failed);
  CHECK(ta_transition(TAState::None, false, false, false, false, false) ==
        TAState::None);
}

TEST_CASE("KeepLane forever stays in None with centered lateral") {
  TravelAssist ta(3, 3.5);
  EgoState ego;
  ego.lane_id = 1;
  ego.v = 15.0;
  std::vector<ObjectState> objs(kMaxObjects);
  for (int i = 0; i < 200; ++i) {
    auto out = ta.step(ego, {LaneChangeCommand::KeepLane, 15.0}, objs, i);
    CHECK(ta.state() == TAState::None);
    CHECK(out.lateral == doctest::Approx(0.0)); // lane 1 of 3 is centered
  }
  CHECK(ta.log().empty());
}

TEST_CASE("request toward a nonexistent lane fails immediately") {
  TravelAssist ta(3, 3.5);
  EgoState ego;
  ego.lane_id = 2; // leftmost
  std::vector<ObjectState> objs(kMaxObjects);
  ta.step(ego, {LaneChangeCommand::Left, 15.0}, objs, 0);
  CHECK(ta.state() == TAState::Failed);
  ta.step(ego, {LaneChangeCommand::KeepLane, 15.0}, objs, 1);
  CHECK(ta.state() == TAState::None);
}

TEST_CASE("blocked target lane: Interrupted then Failed then None") {
  TravelAssist ta(3, 3.5);
  EgoState ego;
  ego.lane_id = 0;
  ego.v = 15.0;
  std::vector<ObjectState> objs(kMaxObjects);
  objs[0] = {15.0, 0.5, 3.5, 1, 4.5, true}; // parallel vehicle in target lane
  std::vector<TAState> seen;
  for (int i = 0; i < 40; ++i) {
    ta.step(ego, {i == 0 ? LaneChangeCommand::Left : LaneChangeCommand::KeepLane, 15.0},
            objs, i);
    if (seen.empty() || seen.back() != ta.state()) seen.push_back(ta.state());
  }
  const std::vector<TAState> expected = {TAState::Instantiated, TAState::ReadyToChange,
                                         TAState::Interrupted, TAState::Failed,
                                         TAState::None};
  CHECK(seen == expected);
}

TEST_CASE("successful change: latency, lateral profile, lane delta") {
  TravelAssist ta(3, 3.5);
  EgoState ego;
  ego.lane_id = 0;
  ego.v = 15.0;
  std::vector<ObjectState> objs(kMaxObjects); // empty road
  int start_movement_step = -1, success_step = -1;
  double final_lateral = 0.0;
  for (int i = 0; i < 300; ++i) {
    auto out = ta.step(
        ego, {i == 0 ? LaneChangeCommand::Left : LaneChangeCommand::KeepLane, 15.0},
        objs, i);
    if (out.lane_committed >= 0) ego.lane_id = out.lane_committed;
    final_lateral = out.lateral;
  }
  for (const auto& tr : ta.log()) {
    if (tr.to == TAState::StartMovement) start_movement_step = tr.step;
    if (tr.to == TAState::Success) success_step = tr.step;
  }
  REQUIRE(start_movement_step > 0);
  REQUIRE(success_step > start_movement_step);
  CHECK(start_movement_step - ta.command_step() >= 20);
  CHECK(ego.lane_id == 1); // delta +1
  CHECK(final_lateral == doctest::Approx(0.0)); // lane 1 center
  // maneuver duration ~2 s
  CHECK(success_step - start_movement_step == doctest::Approx(100).epsilon(0.05));
}

TEST_CASE("acc examples") {
  EgoState ego;
  ego.v = 15.0;
  // setpoint reached, free road
  CHECK(acc_step(ego, nullptr, 15.0) == doctest::Approx(0.0).epsilon(1e-9));
  // stopped lead 10 m ahead: maximal braking
  ObjectState lead{0.0, 10.0, 0.0, 0, 4.5, true};
  CHECK(acc_step(ego, &lead, 15.0) == doctest::Approx(-4.0));
  // faster lead far ahead: free-road regime, accelerate toward target
  ego.v = 10.0;
  ObjectState fast{20.0, 120.0, 0.0, 0, 4.5, true};
  CHECK(acc_step(ego, &fast, 20.0) > 0.5);
}

TEST_CASE("acc never rear-ends a bounded-decel lead") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int scenario = 0; scenario < 30; ++scenario) {
    double ego_v = 5.0 + 15.0 * u(rng);
    double lead_v = 5.0 + 15.0 * u(rng);
    double gap = 20.0 + 60.0 * u(rng); // bumper-to-bumper
    bool collided = false;
    for (int i = 0; i < 5000; ++i) {
      // lead follows a random trace with |decel| <= 4
      const double lead_a = -4.0 + 6.0 * u(rng);
      lead_v = std::clamp(lead_v + lead_a * kSimDt, 0.0, 25.0);
      EgoState ego;
      ego.v = ego_v;
      ObjectState lead{lead_v, gap + 4.5, 0.0, 0, 4.5, true};
      const double a = acc_step(ego, &lead, 22.0);
      ego_v = std::max(0.0, ego_v + a * kSimDt);
      gap += (lead_v - ego_v) * kSimDt;
      if (gap <= 0.0) {
        collided = true;
        break;
      }
    }
    CHECK_FALSE(collided);
  }
}

TEST_CASE("closed-loop change over the sim records >= 20 step latency") {
  Simulator sim;
  SimConfig cfg;
  cfg.density = 0.0;
  cfg.seed = 5;
  sim.reset(cfg);
  TravelAssist ta(sim.track().lane_count, sim.track().lane_width);
  const int start_lane = sim.world().ego_lane;
  const bool go_left = start_lane + 1 < sim.track().lane_count;
  run_episode(sim, ta, 400,
              [&](int step, const EgoState& ego, const auto&, TAState) {
                TAInput in{LaneChangeCommand::KeepLane, ego.s};
                if (step == 10)
                  in.lane_request =
                      go_left ? LaneChangeCommand::Left : LaneChangeCommand::Right;
                return in;
              },
              [](const StepRecord&) { return true; });
  int cmd = -1, move = -1;
  bool success = false;
  for (const auto& tr : ta.log()) {
    if (tr.to == TAState::Instantiated) cmd = tr.step;
    if (tr.to == TAState::StartMovement) move = tr.step;
    if (tr.to == TAState::Success) success = true;
  }
  REQUIRE(success);
  CHECK(move - cmd >= 20);
  CHECK(std::abs(sim.world().ego_lane - start_lane) == 1);
}
