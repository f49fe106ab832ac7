#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "osha/types.hpp"

namespace osha {

// Rotate (global - ego) into the ego frame: x forward, y left.
inline std::vector<Vec2> to_local_frame(const Pose& ego,
                                        const std::vector<Vec2>& futures) {
  if (futures.empty()) throw std::invalid_argument("to_local_frame: empty input");
  auto finite = [](double a) { return std::isfinite(a); };
  if (!finite(ego.x) || !finite(ego.y) || !finite(ego.heading))
    throw std::invalid_argument("to_local_frame: non-finite ego pose");
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  std::vector<Vec2> out;
  out.reserve(futures.size());
  for (const Vec2& p : futures) {
    if (!finite(p.x) || !finite(p.y))
      throw std::invalid_argument("to_local_frame: non-finite point");
    const double dx = p.x - ego.x;
    const double dy = p.y - ego.y;
    out.push_back({c * dx + s * dy, -s * dx + c * dy});
  }
  return out;
}

inline Vec2 to_local_point(const Pose& ego, Vec2 p) {
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  const double dx = p.x - ego.x;
  const double dy = p.y - ego.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

// Quartic Bezier with C0 pinned at the origin.
struct BezierCurve {
  Vec2 c1, c2, c3, c4;
};

// Bernstein basis for the four free control points (C0 term vanishes).
inline std::array<double, 4> bezier_basis(double t) {
  const double u = 1.0 - t;
  return {4.0 * u * u * u * t, 6.0 * u * u * t * t, 4.0 * u * t * t * t,
          t * t * t * t};
}

inline Vec2 bezier_eval(const BezierCurve& curve, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("bezier_eval: t outside [0,1]");
  const auto b = bezier_basis(t);
  return {b[0] * curve.c1.x + b[1] * curve.c2.x + b[2] * curve.c3.x + b[3] * curve.c4.x,
          b[0] * curve.c1.y + b[1] * curve.c2.y + b[2] * curve.c3.y + b[3] * curve.c4.y};
}

// Sample parameters for the five future points, 500 ms apart.
constexpr std::array<double, 5> kBezierSampleTs = {0.2, 0.4, 0.6, 0.8, 1.0};

namespace detail {

// Solve a 4x4 system in place, partial pivoting. The Bernstein design matrix
// has full rank, so a vanishing pivot is a programming error.
inline std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a,
                                    std::array<double, 4> b) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    assert(std::fabs(a[col][col]) > 1e-12);
    for (int r = col + 1; r < 4; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < 4; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

} // namespace detail

struct BezierFit {
  BezierCurve curve;
  double residual = 0.0; // sqrt of summed squared point errors
};

// Least squares against the fixed Bernstein design matrix at t = 0.2..1.0.
inline BezierFit bezier_fit(const std::array<Vec2, 5>& points) {
  std::array<std::array<double, 4>, 5> design{};
  for (int i = 0; i < 5; ++i) {
    const auto b = bezier_basis(kBezierSampleTs[i]);
    for (int j = 0; j < 4; ++j) design[i][j] = b[j];
  }
  std::array<std::array<double, 4>, 4> ata{};
  std::array<double, 4> atx{}, aty{};
  for (int i = 0; i < 5; ++i) {
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) ata[r][c] += design[i][r] * design[i][c];
      atx[r] += design[i][r] * points[i].x;
      aty[r] += design[i][r] * points[i].y;
    }
  }
  const auto cx = detail::solve4(ata, atx);
  const auto cy = detail::solve4(ata, aty);
  BezierFit fit;
  fit.curve = {{cx[0], cy[0]}, {cx[1], cy[1]}, {cx[2], cy[2]}, {cx[3], cy[3]}};
  double rss = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Vec2 p = bezier_eval(fit.curve, kBezierSampleTs[i]);
    rss += (p.x - points[i].x) * (p.x - points[i].x) +
           (p.y - points[i].y) * (p.y - points[i].y);
  }
  fit.residual = std::sqrt(rss);
  return fit;
}

// Pairwise Euclidean distances over the 21 object-list slots (ego last).
struct DistanceMatrix {
  std::array<std::array<double, kSlots>, kSlots> d{};
  std::array<std::array<bool, kSlots>, kSlots> mask{};
};

inline DistanceMatrix build_distance_matrix(const EgoState&,
                                            const std::vector<ObjectState>& objects) {
  DistanceMatrix m;
  std::array<Vec2, kSlots> pos{};
  std::array<bool, kSlots> present{};
  for (int i = 0; i < kMaxObjects; ++i) {
    if (i < static_cast<int>(objects.size()) && objects[i].present) {
      pos[i] = {objects[i].x, objects[i].y};
      present[i] = true;
    }
  }
  pos[kEgoSlot] = {0.0, 0.0}; // ego at the local origin
  present[kEgoSlot] = true;
  for (int i = 0; i < kSlots; ++i) {
    for (int j = 0; j < kSlots; ++j) {
      m.mask[i][j] = present[i] && present[j];
      if (m.mask[i][j] && i != j) m.d[i][j] = norm(pos[i] - pos[j]);
    }
  }
  return m;
}

} // namespace osha
