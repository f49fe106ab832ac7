#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "osha/core.hpp"
#include "osha/png_io.hpp"
#include "osha/track.hpp"
#include "osha/types.hpp"

namespace osha {

enum class Behavior : std::uint8_t { Slow = 0, Normal = 1, Fast = 2 };

inline double behavior_factor(Behavior b) {
  switch (b) {
    case Behavior::Slow: return 0.8;
    case Behavior::Normal: return 1.0;
    case Behavior::Fast: return 1.2;
  }
  return 1.0;
}

struct TrafficAgent {
  int id = 0;
  double s_pos = 0.0;   // arclength along centerline
  int lane = 0;
  double v = 0.0;
  double length = 4.5;
  Behavior behavior = Behavior::Normal;
  double lateral = 0.0;
  // courtesy lane change
  int target_lane = -1;      // -1 = not changing
  double lc_progress = 0.0;  // [0,1]
  int blocked_steps = 0;
};

struct SimConfig {
  double dt = kSimDt;
  double density = 15.0; // vehicles per km
  std::uint64_t seed = 1;
  int max_steps = 20000;
  std::string track = "training";
};

struct EgoControls {
  double accel = 0.0;    // m/s^2
  double lateral = 0.0;  // absolute lateral offset target for this step
};

struct Event {
  enum class Type : std::uint8_t { EgoCollision, AgentCollision, LapCompleted };
  Type type;
  int step = 0;
  int a = -1; // agent ids involved (-1 = ego)
  int b = -1;
};

// Ego geometry used for collision intervals and rasterization.
constexpr double kVehicleHalfWidth = 1.0;

// IDM-style car-following parameters for background traffic.
struct CarFollowParams {
  double time_headway = 1.5;
  double max_accel = 2.0;
  double comfort_decel = 3.0;
  double min_gap = 2.0;
  double emergency_decel = 8.0;
};

inline double idm_accel(double v, double v_desired, std::optional<double> gap,
                        double v_lead, const CarFollowParams& p) {
  const double vd = std::max(v_desired, 0.1);
  double acc = p.max_accel * (1.0 - std::pow(v / vd, 4.0));
  if (gap) {
    const double dv = v - v_lead;
    double sstar = p.min_gap + v * p.time_headway +
                   v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
    sstar = std::max(sstar, p.min_gap);
    const double g = std::max(*gap, 0.05);
    acc -= p.max_accel * (sstar / g) * (sstar / g);
  }
  return std::clamp(acc, -p.emergency_decel, p.max_accel);
}

struct WorldState {
  int step = 0;
  // ego
  double ego_s = 0.0;
  double ego_lateral = 0.0;
  double ego_prev_lateral = 0.0;
  double ego_v = 0.0;
  int ego_lane = 0;
  double ego_distance = 0.0; // cumulative driven arclength
  int laps_completed = 0;
  std::vector<TrafficAgent> agents;
  std::mt19937_64 rng;
};

class Simulator {
 public:
  Simulator() = default;

  void reset(const SimConfig& cfg) {
    if (std::fabs(cfg.dt - kSimDt) > 1e-12)
      throw std::invalid_argument("SimConfig: dt is fixed at 20 ms");
    if (cfg.density < 0.0 || cfg.density > 35.0)
      throw std::invalid_argument("SimConfig: density outside [0, 35] per km");
    cfg_ = cfg;
    track_ = track_by_name(cfg.track);
    w_ = WorldState{};
    w_.rng.seed(cfg.seed);

    std::uniform_int_distribution<int> lane_dist(0, track_.lane_count - 1);
    std::uniform_real_distribution<double> s_dist(0.0, track_.length());
    w_.ego_lane = lane_dist(w_.rng);
    w_.ego_s = s_dist(w_.rng);
    w_.ego_lateral = w_.ego_prev_lateral = track_.lane_center(w_.ego_lane);
    w_.ego_v = 0.5 * track_.speed_limit(w_.ego_s);

    const int n = static_cast<int>(std::lround(cfg.density * track_.length() / 1000.0));
    std::uniform_real_distribution<double> len_dist(4.0, 5.5);
    std::uniform_int_distribution<int> beh_dist(0, 2);
    int placed = 0, attempts = 0;
    const int max_attempts = 1000 * std::max(n, 1);
    while (placed < n) {
      if (++attempts > max_attempts)
        throw std::runtime_error("Simulator: density too high to satisfy minimum gaps");
      TrafficAgent a;
      a.id = placed;
      a.s_pos = s_dist(w_.rng);
      a.lane = lane_dist(w_.rng);
      a.length = len_dist(w_.rng);
      a.behavior = static_cast<Behavior>(beh_dist(w_.rng));
      a.lateral = track_.lane_center(a.lane);
      a.v = std::min(behavior_factor(a.behavior) * track_.speed_limit(a.s_pos),
                     1.2 * kMaxEgoSpeed);
      if (!placement_ok(a)) continue;
      w_.agents.push_back(a);
      ++placed;
    }
  }

  const Track& track() const { return track_; }
  const SimConfig& config() const { return cfg_; }
  const WorldState& world() const { return w_; }
  WorldState& mutable_world() { return w_; }

  void set_ego_lane(int lane) {
    if (lane < 0 || lane >= track_.lane_count)
      throw std::invalid_argument("set_ego_lane: lane out of range");
    w_.ego_lane = lane;
  }

  std::vector<Event> step(const EgoControls& controls) {
    std::vector<Event> events;
    const double dt = cfg_.dt;

    // traffic accelerations against current leaders
    std::vector<double> accels(w_.agents.size(), 0.0);
    for (std::size_t i = 0; i < w_.agents.size(); ++i)
      accels[i] = agent_accel(w_.agents[i]);

    maybe_courtesy_changes();

    for (std::size_t i = 0; i < w_.agents.size(); ++i) {
      TrafficAgent& a = w_.agents[i];
      a.v = std::max(0.0, a.v + accels[i] * dt);
      a.s_pos = track_.wrap_s(a.s_pos + a.v * dt);
      advance_lane_change(a, dt);
    }

    // ego kinematics; lateral motion is commanded by the controller
    w_.ego_v = std::clamp(w_.ego_v + controls.accel * dt, 0.0, kMaxEgoSpeed);
    const double ds = w_.ego_v * dt;
    w_.ego_s = track_.wrap_s(w_.ego_s + ds);
    w_.ego_distance += ds;
    w_.ego_prev_lateral = w_.ego_lateral;
    w_.ego_lateral = controls.lateral;

    if (w_.ego_distance >= (w_.laps_completed + 1) * track_.length()) {
      ++w_.laps_completed;
      events.push_back({Event::Type::LapCompleted, w_.step});
    }

    detect_collisions(events);
    ++w_.step;
    return events;
  }

  // Ego pose in global coordinates. Heading includes the lateral-rate
  // component so the local frame tracks actual motion during lane changes.
  Pose ego_pose() const {
    Pose p = track_.pose_at(w_.ego_s);
    const Vec2 pos = track_.position(w_.ego_s, w_.ego_lateral);
    double heading = p.heading;
    if (w_.ego_v > 0.5) {
      const double lat_rate = (w_.ego_lateral - w_.ego_prev_lateral) / cfg_.dt;
      heading = wrap_angle(heading + std::atan2(lat_rate, w_.ego_v));
    }
    return {pos.x, pos.y, heading};
  }

  std::pair<EgoState, std::vector<ObjectState>> observe() const {
    EgoState ego;
    ego.v = w_.ego_v;
    ego.s = track_.speed_limit(w_.ego_s);
    ego.lane_id = w_.ego_lane;
    ego.left_avail = w_.ego_lane + 1 < track_.lane_count;
    ego.right_avail = w_.ego_lane > 0;
    const Pose ep = ego_pose();
    ego.x = ep.x;
    ego.y = ep.y;
    ego.heading = ep.heading;

    struct Cand { double dist; ObjectState obj; };
    std::vector<Cand> cands;
    for (const auto& a : w_.agents) {
      const Vec2 gp = track_.position(a.s_pos, a.lateral);
      const double dist = norm(gp - Vec2{ep.x, ep.y});
      if (dist > kObserveRadius) continue;
      const Vec2 lp = to_local_point(ep, gp);
      ObjectState o;
      o.v = a.v;
      o.x = lp.x;
      o.y = lp.y;
      o.lane_id = effective_lane(a);
      o.length = a.length;
      o.present = true;
      cands.push_back({dist, o});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& l, const Cand& r) { return l.dist < r.dist; });
    std::vector<ObjectState> objs(kMaxObjects);
    for (int i = 0; i < kMaxObjects && i < static_cast<int>(cands.size()); ++i)
      objs[i] = cands[i].obj;
    return {ego, objs};
  }

  // Ego-centric top-down raster: 50x100, 0.5 m/px, ego at (col 25, row 60).
  // Pixel codes: background 0, lane i -> 40+20*i, vehicles 220, ego 255.
  png::Image render_lane_raster() const {
    png::Image img;
    img.width = 50;
    img.height = 100;
    img.pixels.assign(50 * 100, 0);
    const Pose ep = ego_pose();
    auto plot = [&](Vec2 local, std::uint8_t code) {
      const int row = 60 - static_cast<int>(std::lround(local.x / 0.5));
      const int col = 25 - static_cast<int>(std::lround(local.y / 0.5));
      if (row >= 0 && row < 100 && col >= 0 && col < 50)
        img.pixels[static_cast<std::size_t>(row) * 50 + col] = code;
    };
    // drivable lanes
    for (double ds = -22.0; ds <= 34.0; ds += 0.2) {
      const double s = w_.ego_s + ds;
      for (int lane = 0; lane < track_.lane_count; ++lane) {
        const double c = track_.lane_center(lane);
        const auto code = static_cast<std::uint8_t>(40 + 20 * lane);
        for (double lat = c - 0.5 * track_.lane_width + 0.1;
             lat <= c + 0.5 * track_.lane_width - 0.1 + 1e-9; lat += 0.2)
          plot(to_local_point(ep, track_.position(s, lat)), code);
      }
    }
    // other vehicles
    for (const auto& a : w_.agents) {
      const Vec2 gp = track_.position(a.s_pos, a.lateral);
      if (norm(gp - Vec2{ep.x, ep.y}) > 60.0) continue;
      const double h = track_.pose_at(a.s_pos).heading;
      const Vec2 dir{std::cos(h), std::sin(h)};
      const Vec2 nrm{-std::sin(h), std::cos(h)};
      for (double u = -0.5 * a.length; u <= 0.5 * a.length; u += 0.2)
        for (double w = -kVehicleHalfWidth; w <= kVehicleHalfWidth; w += 0.2)
          plot(to_local_point(ep, gp + u * dir + w * nrm), 220);
    }
    // ego footprint, already in the local frame
    for (double u = -0.5 * kEgoLength; u <= 0.5 * kEgoLength; u += 0.2)
      for (double w = -kVehicleHalfWidth; w <= kVehicleHalfWidth; w += 0.2)
        plot({u, w}, 255);
    return img;
  }

  // Snapshot for replay. Text-based mt19937_64 state keeps it exact.
  std::string snapshot() const {
    std::ostringstream os;
    os.precision(17);
    os << w_.step << ' ' << w_.ego_s << ' ' << w_.ego_lateral << ' '
       << w_.ego_prev_lateral << ' ' << w_.ego_v << ' ' << w_.ego_lane << ' '
       << w_.ego_distance << ' ' << w_.laps_completed << ' ' << w_.agents.size() << '\n';
    for (const auto& a : w_.agents)
      os << a.id << ' ' << a.s_pos << ' ' << a.lane << ' ' << a.v << ' ' << a.length
         << ' ' << static_cast<int>(a.behavior) << ' ' << a.lateral << ' '
         << a.target_lane << ' ' << a.lc_progress << ' ' << a.blocked_steps << '\n';
    os << w_.rng << '\n';
    return os.str();
  }

  void restore(const std::string& snap) {
    std::istringstream is(snap);
    std::size_t n = 0;
    is >> w_.step >> w_.ego_s >> w_.ego_lateral >> w_.ego_prev_lateral >> w_.ego_v >>
        w_.ego_lane >> w_.ego_distance >> w_.laps_completed >> n;
    w_.agents.assign(n, {});
    for (auto& a : w_.agents) {
      int beh = 0;
      is >> a.id >> a.s_pos >> a.lane >> a.v >> a.length >> beh >> a.lateral >>
          a.target_lane >> a.lc_progress >> a.blocked_steps;
      a.behavior = static_cast<Behavior>(beh);
    }
    is >> w_.rng;
    if (!is) throw std::runtime_error("Simulator: bad snapshot");
  }

 private:
  Track track_;
  SimConfig cfg_;
  WorldState w_;

  bool placement_ok(const TrafficAgent& a) const {
    // keep clear of ego
    if (a.lane == w_.ego_lane) {
      const double g1 = track_.forward_gap(a.s_pos, w_.ego_s);
      const double g2 = track_.forward_gap(w_.ego_s, a.s_pos);
      if (std::min(g1, g2) < 30.0) return false;
    }
    for (const auto& other : w_.agents) {
      if (other.lane != a.lane) continue;
      const double g1 = track_.forward_gap(a.s_pos, other.s_pos);
      const double g2 = track_.forward_gap(other.s_pos, a.s_pos);
      if (std::min(g1, g2) < 2.0 * std::max(a.length, other.length) + 3.0) return false;
    }
    return true;
  }

  // Observed lane of an agent: a committed lane change is visible at once
  // (signaling), so followers in the destination lane can react in time.
  int effective_lane(const TrafficAgent& a) const {
    return a.target_lane >= 0 ? a.target_lane : a.lane;
  }

  // Nearest obstacle ahead of agent i in the given lane (agents or ego).
  struct Leader { double gap; double v; };
  std::optional<Leader> leader_in_lane(double s, double half_len, int lane,
                                       int skip_id) const {
    std::optional<Leader> best;
    auto consider = [&](double os, double olen, double ov) {
      double gap = track_.forward_gap(s, os) - 0.5 * olen - half_len;
      if (gap < -0.5 * track_.length()) return;
      if (!best || gap < best->gap) best = Leader{gap, ov};
    };
    for (const auto& o : w_.agents) {
      if (o.id == skip_id) continue;
      if (o.lane == lane || (o.target_lane == lane && o.target_lane >= 0))
        consider(o.s_pos, o.length, o.v);
    }
    for (int el : ego_lanes())
      if (el == lane) consider(w_.ego_s, kEgoLength, w_.ego_v);
    if (best && best->gap > 150.0) return std::nullopt;
    return best;
  }

  // lanes whose span the ego footprint currently overlaps
  std::vector<int> ego_lanes() const {
    std::vector<int> lanes;
    for (int lane = 0; lane < track_.lane_count; ++lane) {
      const double c = track_.lane_center(lane);
      if (std::fabs(w_.ego_lateral - c) <
          0.5 * track_.lane_width + kVehicleHalfWidth - 0.2)
        lanes.push_back(lane);
    }
    return lanes;
  }

  double agent_accel(const TrafficAgent& a) const {
    const double v_desired = behavior_factor(a.behavior) * track_.speed_limit(a.s_pos);
    const auto lead = leader_in_lane(a.s_pos, 0.5 * a.length, a.lane, a.id);
    std::optional<double> gap;
    double v_lead = 0.0;
    if (lead) {
      gap = lead->gap;
      v_lead = lead->v;
    }
    // a mid-change agent also respects its target lane
    if (a.target_lane >= 0) {
      const auto lead2 = leader_in_lane(a.s_pos, 0.5 * a.length, a.target_lane, a.id);
      if (lead2 && (!gap || lead2->gap < *gap)) {
        gap = lead2->gap;
        v_lead = lead2->v;
      }
    }
    return idm_accel(a.v, v_desired, gap, v_lead, follow_);
  }

  void maybe_courtesy_changes() {
    for (auto& a : w_.agents) {
      if (a.target_lane >= 0) continue;
      const double v_desired = behavior_factor(a.behavior) * track_.speed_limit(a.s_pos);
      const auto lead = leader_in_lane(a.s_pos, 0.5 * a.length, a.lane, a.id);
      const bool blocked = lead && lead->gap < 25.0 && lead->v < 0.9 * v_desired;
      a.blocked_steps = blocked ? a.blocked_steps + 1 : 0;
      if (a.blocked_steps <= 250) continue; // > 5 s
      int best_lane = -1;
      double best_gap = lead ? lead->gap : 0.0;
      for (int cand : {a.lane + 1, a.lane - 1}) {
        if (cand < 0 || cand >= track_.lane_count) continue;
        if (!lane_gap_safe(a, cand)) continue;
        const auto fl = leader_in_lane(a.s_pos, 0.5 * a.length, cand, a.id);
        const double fg = fl ? fl->gap : 1e9;
        if (fg > best_gap) {
          best_gap = fg;
          best_lane = cand;
        }
      }
      if (best_lane >= 0) {
        a.target_lane = best_lane;
        a.lc_progress = 0.0;
        a.blocked_steps = 0;
      }
    }
  }

  bool lane_gap_safe(const TrafficAgent& a, int lane) const {
    const auto front = leader_in_lane(a.s_pos, 0.5 * a.length, lane, a.id);
    if (front && front->gap < 15.0) return false;
    // Prospective ego occupancy: a converging ego (mid lane change) counts as
    // occupying the candidate lane well before its body physically enters it,
    // so agents never commit into a gap the ego is about to fill.
    const bool ego_prospective =
        std::fabs(w_.ego_lateral - track_.lane_center(lane)) < track_.lane_width;
    if (ego_prospective) {
      const double ego_front_gap =
          track_.forward_gap(a.s_pos, w_.ego_s) - 0.5 * kEgoLength - 0.5 * a.length;
      if (ego_front_gap >= 0.0 && ego_front_gap < 15.0) return false;
    }
    // nearest follower in the target lane
    std::optional<double> rear_gap;
    double rear_v = 0.0;
    auto consider = [&](double os, double olen, double ov) {
      const double gap = track_.forward_gap(os, a.s_pos) - 0.5 * olen - 0.5 * a.length;
      if (!rear_gap || gap < *rear_gap) {
        rear_gap = gap;
        rear_v = ov;
      }
    };
    for (const auto& o : w_.agents)
      if (o.id != a.id && (o.lane == lane || o.target_lane == lane))
        consider(o.s_pos, o.length, o.v);
    if (ego_prospective) consider(w_.ego_s, kEgoLength, w_.ego_v);
    if (rear_gap) {
      if (*rear_gap < 10.0) return false;
      const double closing = rear_v - a.v;
      if (closing > 0.0 && *rear_gap / closing < 2.5) return false;
    }
    return true;
  }

  void advance_lane_change(TrafficAgent& a, double dt) {
    if (a.target_lane < 0) return;
    a.lc_progress += dt / 2.0; // 2 s maneuver
    const double from = track_.lane_center(a.lane);
    const double to = track_.lane_center(a.target_lane);
    const double f = 0.5 * (1.0 - std::cos(std::numbers::pi * std::min(a.lc_progress, 1.0)));
    a.lateral = from + f * (to - from);
    if (a.lc_progress >= 1.0) {
      a.lane = a.target_lane;
      a.lateral = to;
      a.target_lane = -1;
      a.lc_progress = 0.0;
    }
  }

  // Two vehicles collide when both their arclength footprints and their
  // lateral footprints (two half-widths) overlap. The sweep over the
  // s-sorted boxes only needs to look ahead one maximal footprint.
  void detect_collisions(std::vector<Event>& events) const {
    struct Box { double s; double lat; double half; int id; }; // id -1 = ego
    std::vector<Box> boxes;
    boxes.reserve(w_.agents.size() + 1);
    double max_half = 0.5 * kEgoLength;
    for (const auto& a : w_.agents) {
      boxes.push_back({a.s_pos, a.lateral, 0.5 * a.length, a.id});
      max_half = std::max(max_half, 0.5 * a.length);
    }
    boxes.push_back({w_.ego_s, w_.ego_lateral, 0.5 * kEgoLength, -1});
    std::sort(boxes.begin(), boxes.end(),
              [](const Box& l, const Box& r) { return l.s < r.s; });
    auto emit = [&](const Box& a, const Box& b, double gap) {
      if (gap >= a.half + b.half) return;
      if (std::fabs(a.lat - b.lat) >= 2.0 * kVehicleHalfWidth) return;
      const bool ego_involved = a.id < 0 || b.id < 0;
      events.push_back({ego_involved ? Event::Type::EgoCollision
                                     : Event::Type::AgentCollision,
                        w_.step, a.id, b.id});
    };
    const std::size_t n = boxes.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (boxes[j].s - boxes[i].s >= boxes[i].half + max_half) break;
        emit(boxes[i], boxes[j], boxes[j].s - boxes[i].s);
      }
    // pairs straddling the track wrap point
    for (std::size_t i = n; i-- > 0;) {
      const double tail = track_.length() - boxes[i].s;
      if (tail >= 2.0 * max_half) break;
      for (std::size_t j = 0; j < n && j != i; ++j) {
        if (tail + boxes[j].s >= boxes[i].half + max_half) break;
        emit(boxes[i], boxes[j], tail + boxes[j].s);
      }
    }
  }

  CarFollowParams follow_;
};

} // namespace osha
