#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace osha {

constexpr double kKmhToMs = 1.0 / 3.6;
constexpr double kSimDt = 0.02;          // 50 Hz
constexpr double kMaxEgoSpeed = 80.0 * kKmhToMs;
constexpr double kObserveRadius = 100.0; // object list horizon, meters
constexpr int kMaxObjects = 20;
constexpr int kSlots = kMaxObjects + 1;  // 20 objects + ego
constexpr int kEgoSlot = kMaxObjects;
constexpr int kMaxLanes = 6;
constexpr double kEgoLength = 4.5;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0; // radians, (-pi, pi]
};

// 4-class label space. Transition only appears in processed labels; the
// controller input is restricted to the first three values.
enum class LaneChangeCommand : std::uint8_t {
  KeepLane = 0,
  Left = 1,
  Right = 2,
  Transition = 3,
};

inline const char* to_string(LaneChangeCommand c) {
  switch (c) {
    case LaneChangeCommand::KeepLane: return "keep";
    case LaneChangeCommand::Left: return "left";
    case LaneChangeCommand::Right: return "right";
    case LaneChangeCommand::Transition: return "transition";
  }
  return "?";
}

enum class TAState : std::uint8_t {
  None = 0,
  Instantiated = 1,
  ReadyToChange = 2,
  StartMovement = 3,
  Interrupted = 4,
  Success = 5,
  Failed = 6,
};

inline const char* to_string(TAState s) {
  switch (s) {
    case TAState::None: return "None";
    case TAState::Instantiated: return "Instantiated";
    case TAState::ReadyToChange: return "ReadyToChange";
    case TAState::StartMovement: return "StartMovement";
    case TAState::Interrupted: return "Interrupted";
    case TAState::Success: return "Success";
    case TAState::Failed: return "Failed";
  }
  return "?";
}

constexpr int kNumTAStates = 7;

struct EgoState {
  double v = 0.0;          // m/s
  double s = 0.0;          // speed limit at current position, m/s
  int lane_id = 0;
  bool left_avail = false;
  bool right_avail = false;
  LaneChangeCommand command = LaneChangeCommand::KeepLane;
  double x = 0.0;          // global meters
  double y = 0.0;
  double heading = 0.0;    // radians
};

// Ego-local description of one surrounding vehicle. x is forward, y is left.
struct ObjectState {
  double v = 0.0;
  double x = 0.0;
  double y = 0.0;
  int lane_id = 0;
  double length = 0.0;
  bool present = false;
};

} // namespace osha
