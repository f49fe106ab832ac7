#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "osha/dataset.hpp"
#include "osha/expert.hpp"
#include "osha/nn/checkpoint.hpp"
#include "osha/pipeline/sampleset.hpp"
#include "osha/sim.hpp"
#include "osha/travel_assist.hpp"

namespace osha {

// ---------------------------------------------------------------------------
// online overtake bookkeeping
//
// An encounter starts when a clearly slower vehicle leads the ego within the
// headway window. It counts as a completed overtake once that vehicle ends up
// behind the ego while the ego sits in a lane left of it.
class OvertakeTracker {
 public:
  explicit OvertakeTracker(double track_length, double headway_s = 3.0,
                           double speed_margin = 0.5)
      : length_(track_length), headway_(headway_s), margin_(speed_margin) {}

  void step(double ego_s, double ego_v, int ego_lane,
            const std::vector<TrafficAgent>& agents) {
    for (const auto& a : agents) {
      const double ahead = forward(ego_s, a.s_pos); // ego -> agent distance
      State& st = states_[a.id];
      if (!st.encountered) {
        const bool lead = a.lane == ego_lane && ahead > 0.0 && ahead < 0.5 * length_ &&
                          ahead / std::max(ego_v, 1.0) < headway_;
        if (lead && a.v < ego_v - margin_) {
          st.encountered = true;
          ++encounters_;
        }
      } else if (!st.passed) {
        const double behind = forward(a.s_pos, ego_s); // agent -> ego distance
        if (behind > 0.0 && behind < 60.0 && ego_lane > a.lane) {
          st.passed = true;
          ++completed_;
        }
      }
    }
  }

  int encounters() const { return encounters_; }
  int completed() const { return completed_; }
  bool defined() const { return encounters_ > 0; }
  double ratio() const {
    return defined() ? static_cast<double>(completed_) / encounters_ : 0.0;
  }

 private:
  struct State {
    bool encountered = false;
    bool passed = false;
  };
  double forward(double from, double to) const {
    double d = std::fmod(to - from, length_);
    if (d < 0) d += length_;
    return d;
  }
  double length_;
  double headway_;
  double margin_;
  std::map<int, State> states_;
  int encounters_ = 0;
  int completed_ = 0;
};

// ---------------------------------------------------------------------------

struct EvalConfig {
  double density = 15.0;
  int episodes = 10;
  std::uint64_t seed = 100;
  std::string track = "evaluation";
  int max_steps = 20000;
};

struct EpisodeMetrics {
  std::uint64_t seed = 0;
  double speed_difference = 0.0; // mean |v - limit|, m/s
  double time_to_finish = 0.0;   // s; max-time when the lap was not closed
  bool finished = false;
  int ego_collisions = 0;
  int lane_changes = 0;
  int overtake_encounters = 0;
  int overtake_completed = 0;
  bool overtake_defined = false;
  double overtake_ratio = 0.0;
  double mean_speed = 0.0;
  double distance = 0.0;
};

struct EvalReport {
  std::string policy;
  EvalConfig config;
  std::vector<EpisodeMetrics> episodes;
  double mean_speed_difference = 0.0;
  double mean_time_to_finish = 0.0;
  double overtake_ratio = 0.0; // mean over episodes where it is defined
  bool overtake_defined = false;
  int finished_episodes = 0;
  int total_collisions = 0;
};

inline void to_json(nlohmann::json& j, const EpisodeMetrics& m) {
  j = {{"seed", m.seed},
       {"speed_difference", m.speed_difference},
       {"time_to_finish", m.time_to_finish},
       {"finished", m.finished},
       {"ego_collisions", m.ego_collisions},
       {"lane_changes", m.lane_changes},
       {"overtake_encounters", m.overtake_encounters},
       {"overtake_completed", m.overtake_completed},
       {"overtake_defined", m.overtake_defined},
       {"overtake_ratio", m.overtake_ratio},
       {"mean_speed", m.mean_speed},
       {"distance", m.distance}};
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"policy", r.policy},
       {"density", r.config.density},
       {"episodes", r.config.episodes},
       {"seed", r.config.seed},
       {"track", r.config.track},
       {"max_steps", r.config.max_steps},
       {"per_episode", r.episodes},
       {"mean_speed_difference", r.mean_speed_difference},
       {"mean_time_to_finish", r.mean_time_to_finish},
       {"overtake_ratio", r.overtake_ratio},
       {"overtake_defined", r.overtake_defined},
       {"finished_episodes", r.finished_episodes},
       {"total_collisions", r.total_collisions}};
}

// Policy interface for closed-loop runs: called every sim step.
using Policy = std::function<TAInput(int step, const EgoState&,
                                     const std::vector<ObjectState>&, TAState,
                                     Simulator&)>;

// Expert reference policy, decided at the 25 Hz record cadence.
class ExpertEvalPolicy {
 public:
  TAInput operator()(int step, const EgoState& ego,
                     const std::vector<ObjectState>& objects, TAState st,
                     Simulator&) {
    if (step % kRecordEvery == 0) {
      const TAInput in = drv_.decide(ego, extract_neighborhood(ego, objects), st);
      held_ = {LaneChangeCommand::KeepLane, in.target_speed};
      return in;
    }
    return held_;
  }

 private:
  ExpertDriver drv_;
  TAInput held_{LaneChangeCommand::KeepLane, kMaxEgoSpeed};
};

// Learned policy: observations buffered at 25 Hz, the network queried every
// 10 sim steps (0.2 s); per-record vision embeddings are computed once.
class ModelPolicy {
 public:
  explicit ModelPolicy(nn::Checkpoint ck) : ck_(std::move(ck)) {}

  static constexpr int kQueryEvery = 10;

  void reset() {
    records_.clear();
    vision_.clear();
    held_ = {LaneChangeCommand::KeepLane, kMaxEgoSpeed};
  }

  TAInput operator()(int step, const EgoState& ego,
                     const std::vector<ObjectState>& objects, TAState st,
                     Simulator& sim) {
    const nn::ModelConfig& cfg = ck_.config;
    if (step % kRecordEvery == 0) {
      RawRecord rec;
      rec.step = static_cast<std::uint64_t>(step / kRecordEvery);
      rec.ego = ego;
      rec.objects = objects;
      rec.ta_state = st;
      records_.push_back(std::move(rec));
      if (cfg.use_vision)
        vision_.push_back(nn::compute_vision_embedding(
            cfg, ck_.params, raster_to_mat(sim.render_lane_raster())));
      const std::size_t keep = 130; // history horizon plus slack
      if (records_.size() > keep) {
        records_.pop_front();
        if (cfg.use_vision) vision_.pop_front();
      }
    }
    if (step % kQueryEvery == 0 && !records_.empty()) {
      nn::SampleInput in;
      in.numeric = nn::Mat(cfg.history, nn::kNumericFeatures);
      nn::Mat vis(cfg.history, cfg.vision_dim);
      const int last = static_cast<int>(records_.size()) - 1;
      for (int k = 0; k < cfg.history; ++k) {
        const int off = SampleSet::history_offset(k, cfg.history);
        const int t = std::max(0, last - off);
        fill_frame_features(records_[t],
                            &in.numeric.a[static_cast<std::size_t>(k) *
                                          nn::kNumericFeatures]);
        if (cfg.use_vision)
          for (int j = 0; j < cfg.vision_dim; ++j) vis.at(k, j) = vision_[t].at(0, j);
      }
      if (cfg.use_vision) in.vision_cache = &vis;
      nn::Graph g;
      const nn::Forward f = nn::forward_sample(g, cfg, ck_.params, in, false);
      const nn::Mat& logits = g.val(f.lane);
      int best = 0;
      for (int c = 1; c < nn::kLaneClasses; ++c)
        if (logits.at(0, c) > logits.at(0, best)) best = c;
      auto cmd = static_cast<LaneChangeCommand>(best);
      if (cmd == LaneChangeCommand::Transition) cmd = LaneChangeCommand::KeepLane;
      const double v =
          std::clamp(g.val(f.vel).at(0, 0) * kSpeedNorm, 0.0, kMaxEgoSpeed);
      held_ = {cmd, v};
      const TAInput out = held_;
      held_.lane_request = LaneChangeCommand::KeepLane; // command edges only
      return out;
    }
    return held_;
  }

 private:
  nn::Checkpoint ck_;
  std::deque<RawRecord> records_;
  std::deque<nn::Mat> vision_;
  TAInput held_{LaneChangeCommand::KeepLane, kMaxEgoSpeed};
};

// ---------------------------------------------------------------------------

inline EpisodeMetrics run_policy_episode(const SimConfig& cfg, Policy policy) {
  Simulator sim;
  sim.reset(cfg);
  TravelAssist ta(sim.track().lane_count, sim.track().lane_width);
  OvertakeTracker tracker(sim.track().length());

  EpisodeMetrics m;
  m.seed = cfg.seed;
  double speed_err = 0.0, speed_sum = 0.0;
  int steps_run = 0;
  bool done = false;
  for (int step = 0; step < cfg.max_steps && !done; ++step) {
    auto [ego, objects] = sim.observe();
    const TAState before = ta.state();
    TAInput in = policy(step, ego, objects, before, sim);
    EgoState ego_cmd = ego;
    ego_cmd.command = in.lane_request;
    const TAOutput control = ta.step(ego_cmd, in, objects, step);
    if (control.lane_committed >= 0) sim.set_ego_lane(control.lane_committed);
    const auto events = sim.step({control.accel, control.lateral});
    speed_err += std::fabs(ego.v - ego.s);
    speed_sum += ego.v;
    ++steps_run;
    const auto& w = sim.world();
    tracker.step(w.ego_s, w.ego_v, w.ego_lane, w.agents);
    for (const auto& e : events) {
      if (e.type == Event::Type::EgoCollision) ++m.ego_collisions;
      if (e.type == Event::Type::LapCompleted) {
        m.finished = true;
        m.time_to_finish = (step + 1) * kSimDt;
        done = true;
      }
    }
  }
  if (!m.finished) m.time_to_finish = cfg.max_steps * kSimDt;
  m.speed_difference = steps_run > 0 ? speed_err / steps_run : 0.0;
  m.mean_speed = steps_run > 0 ? speed_sum / steps_run : 0.0;
  m.distance = sim.world().ego_distance;
  for (const auto& tr : ta.log())
    if (tr.to == TAState::Success) ++m.lane_changes;
  m.overtake_encounters = tracker.encounters();
  m.overtake_completed = tracker.completed();
  m.overtake_defined = tracker.defined();
  m.overtake_ratio = tracker.ratio();
  return m;
}

// Factory avoids sharing mutable policy state between episodes.
inline EvalReport run_eval(const std::string& policy_name,
                           const std::function<Policy()>& make_policy,
                           const EvalConfig& ec) {
  EvalReport r;
  r.policy = policy_name;
  r.config = ec;
  double ratio_sum = 0.0;
  int ratio_n = 0;
  for (int i = 0; i < ec.episodes; ++i) {
    SimConfig sc;
    sc.density = ec.density;
    sc.seed = ec.seed + static_cast<std::uint64_t>(i);
    sc.track = ec.track;
    sc.max_steps = ec.max_steps;
    const EpisodeMetrics m = run_policy_episode(sc, make_policy());
    r.mean_speed_difference += m.speed_difference;
    r.mean_time_to_finish += m.time_to_finish;
    r.total_collisions += m.ego_collisions;
    if (m.finished) ++r.finished_episodes;
    if (m.overtake_defined) {
      ratio_sum += m.overtake_ratio;
      ++ratio_n;
    }
    r.episodes.push_back(m);
  }
  if (ec.episodes > 0) {
    r.mean_speed_difference /= ec.episodes;
    r.mean_time_to_finish /= ec.episodes;
  }
  r.overtake_defined = ratio_n > 0;
  r.overtake_ratio = ratio_n > 0 ? ratio_sum / ratio_n : 0.0;
  return r;
}

inline EvalReport eval_checkpoint(const nn::Checkpoint& ck, const EvalConfig& ec,
                                  const std::string& name = "") {
  return run_eval(name.empty() ? ck.config.name : name,
                  [&ck]() { return Policy(ModelPolicy(ck)); }, ec);
}

inline EvalReport eval_expert(const EvalConfig& ec) {
  return run_eval("expert", []() { return Policy(ExpertEvalPolicy()); }, ec);
}

} // namespace osha
