#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "osha/core.hpp"
#include "osha/png_io.hpp"
#include "osha/track.hpp"

using namespace osha;

TEST_CASE("to_local_frame basic rotations") {
  // zero heading reduces to subtraction
  auto r = to_local_frame({5, 5, 0}, {{6, 7}});
  CHECK(r[0].x == doctest::Approx(1.0));
  CHECK(r[0].y == doctest::Approx(2.0));

  // heading pi/2: cos=0, sin=1
  r = to_local_frame({0, 0, std::numbers::pi / 2}, {{1, 2}});
  CHECK(r[0].x == doctest::Approx(2.0));
  CHECK(r[0].y == doctest::Approx(-1.0));

  // zero displacement maps to the origin for any heading
  r = to_local_frame({3, -2, 0.7}, {{3, -2}});
  CHECK(r[0].x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r[0].y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("to_local_frame rejects non-finite input") {
  CHECK_THROWS_AS(to_local_frame({0, 0, 0}, {{std::nan(""), 1}}), std::invalid_argument);
  CHECK_THROWS_AS(to_local_frame({std::nan(""), 0, 0}, {{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(to_local_frame({0, 0, 0}, {}), std::invalid_argument);
}

TEST_CASE("to_local_frame is an isometry") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-100, 100);
  std::uniform_real_distribution<double> h(-3.1, 3.1);
  for (int iter = 0; iter < 50; ++iter) {
    Pose ego{d(rng), d(rng), h(rng)};
    std::vector<Vec2> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({d(rng), d(rng)});
    auto loc = to_local_frame(ego, pts);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const double dg = norm(pts[i] - pts[j]);
        const double dl = norm(loc[i] - loc[j]);
        CHECK(dl == doctest::Approx(dg).epsilon(1e-9));
      }
  }
}

TEST_CASE("bezier_eval endpoints and midpoint") {
  BezierCurve c{{1, 3}, {-2, 0.5}, {4, -1}, {7, 2}};
  auto p0 = bezier_eval(c, 0.0);
  CHECK(p0.x == 0.0);
  CHECK(p0.y == 0.0);
  auto p1 = bezier_eval(c, 1.0);
  CHECK(p1.x == doctest::Approx(7.0));
  CHECK(p1.y == doctest::Approx(2.0));

  // collinear equispaced control points reduce to linear interpolation
  BezierCurve lin{{1, 0}, {2, 0}, {3, 0}, {4, 0}};
  auto pm = bezier_eval(lin, 0.5);
  CHECK(pm.x == doctest::Approx(2.0));
  CHECK(pm.y == doctest::Approx(0.0));

  CHECK_THROWS_AS(bezier_eval(c, -0.01), std::domain_error);
  CHECK_THROWS_AS(bezier_eval(c, 1.01), std::domain_error);
}

TEST_CASE("bezier_fit recovers exact curves") {
  // zero data -> zero solution
  auto z = bezier_fit({Vec2{}, Vec2{}, Vec2{}, Vec2{}, Vec2{}});
  CHECK(std::fabs(z.curve.c1.x) < 1e-12);
  CHECK(std::fabs(z.curve.c4.y) < 1e-12);

  // straight line x = 4t -> control points (k, 0)
  std::array<Vec2, 5> line{};
  for (int i = 0; i < 5; ++i) line[i] = {4.0 * kBezierSampleTs[i], 0.0};
  auto f = bezier_fit(line);
  CHECK(f.curve.c1.x == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.curve.c2.x == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(f.curve.c3.x == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(f.curve.c4.x == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(f.residual < 1e-9);
}

TEST_CASE("bezier fit/eval round trip on random curves") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-50, 50);
  for (int iter = 0; iter < 200; ++iter) {
    BezierCurve c{{d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}};
    std::array<Vec2, 5> pts{};
    for (int i = 0; i < 5; ++i) pts[i] = bezier_eval(c, kBezierSampleTs[i]);
    auto f = bezier_fit(pts);
    for (int i = 0; i < 5; ++i) {
      const Vec2 p = bezier_eval(f.curve, kBezierSampleTs[i]);
      CHECK(std::fabs(p.x - pts[i].x) < 1e-6);
      CHECK(std::fabs(p.y - pts[i].y) < 1e-6);
    }
  }
}

TEST_CASE("distance matrix basics") {
  EgoState ego;
  std::vector<ObjectState> objs(kMaxObjects);
  objs[0] = {10.0, 3.0, 4.0, 0, 4.5, true};
  auto m = build_distance_matrix(ego, objs);
  CHECK(m.d[kEgoSlot][0] == doctest::Approx(5.0));
  CHECK(m.mask[kEgoSlot][0]);
  CHECK(m.d[0][kEgoSlot] == m.d[kEgoSlot][0]);

  // empty scene: only the ego pairing survives
  auto e = build_distance_matrix(ego, std::vector<ObjectState>(kMaxObjects));
  for (int i = 0; i < kSlots; ++i)
    for (int j = 0; j < kSlots; ++j) {
      if (i == kEgoSlot && j == kEgoSlot)
        CHECK(e.mask[i][j]);
      else
        CHECK_FALSE(e.mask[i][j]);
      CHECK(e.d[i][j] == 0.0);
    }
}

TEST_CASE("distance matrix matches a brute-force oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-80, 80);
  for (int iter = 0; iter < 20; ++iter) {
    EgoState ego;
    std::vector<ObjectState> objs(kMaxObjects);
    const int n = static_cast<int>(rng() % (kMaxObjects + 1));
    for (int i = 0; i < n; ++i) objs[i] = {10, d(rng), d(rng), 0, 4.5, true};
    auto m = build_distance_matrix(ego, objs);
    // independent O(n^2) loop over slot positions
    for (int i = 0; i < kSlots; ++i) {
      CHECK(m.d[i][i] == 0.0);
      for (int j = 0; j < kSlots; ++j) {
        CHECK(m.d[i][j] == m.d[j][i]);
        CHECK(m.d[i][j] >= 0.0);
        if (i < n && j < n && i != j) {
          const double ex = std::hypot(objs[i].x - objs[j].x, objs[i].y - objs[j].y);
          CHECK(m.d[i][j] == doctest::Approx(ex));
          CHECK(m.mask[i][j]);
        }
      }
    }
  }
}

TEST_CASE("png grayscale round trip") {
  png::Image img;
  img.width = 50;
  img.height = 100;
  img.pixels.resize(5000);
  std::mt19937_64 rng(5);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
  auto bytes = png::encode(img);
  auto back = png::decode(bytes);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
  // identical input -> identical bytes
  CHECK(png::encode(img) == bytes);
}

TEST_CASE("tracks close and partition speed limits") {
  for (const auto* name : {"training", "evaluation"}) {
    Track t = track_by_name(name);
    CHECK(t.length() > 3000.0);
    CHECK(t.lane_count >= 2);
    // pose_at wraps around the loop
    auto p0 = t.pose_at(0.0);
    auto pl = t.pose_at(t.length());
    CHECK(p0.x == doctest::Approx(pl.x).epsilon(1e-9));
    CHECK(p0.y == doctest::Approx(pl.y).epsilon(1e-9));
    // limits come from the Table 1 value set
    for (double s = 0.0; s < t.length(); s += 37.0) {
      const double kmh = t.speed_limit(s) / kKmhToMs;
      const double r = std::fmod(kmh, 10.0);
      CHECK(std::fabs(r) < 1e-9);
      CHECK(kmh >= 30.0 - 1e-9);
      CHECK(kmh <= 80.0 + 1e-9);
    }
  }
  // the two tracks differ in curvature sequence
  Track a = training_track(), b = evaluation_track();
  CHECK(a.pieces.size() != b.pieces.size());
}
