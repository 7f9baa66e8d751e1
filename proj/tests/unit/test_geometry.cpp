#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "gace/geometry.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gace;
using gace::testing::random_box;
using gace::testing::random_point;
using gace::testing::uniform;

using gace::testing::kOctagonArea;
using gace::testing::monte_carlo_overlap;

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(0.25 + 4 * kPi) == doctest::Approx(0.25));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double w = wrap_angle(uniform(rng, -50, 50));
    CHECK(w > -kPi);
    CHECK(w <= kPi);
  }
}

TEST_CASE("box construction validates extents and normalizes yaw") {
  CHECK_THROWS_AS(BoundingBox3D(0, 0, 0, 0, 1, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(BoundingBox3D(0, 0, 0, 1, -1, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(BoundingBox3D(0, 0, 0, 1, 1, INFINITY, 0), std::invalid_argument);
  CHECK_THROWS_AS(BoundingBox3D(0, 0, 0, NAN, 1, 1, 0), std::invalid_argument);
  const BoundingBox3D b(0, 0, 0, 1, 1, 1, -kPi);
  CHECK(b.yaw == doctest::Approx(kPi));
  CHECK(BoundingBox3D(0, 0, 0, 1, 1, 1, 7.0).yaw == doctest::Approx(7.0 - 2 * kPi));
}

TEST_CASE("viewing angle examples") {
  CHECK(viewing_angle(BoundingBox3D(10, 0, 0, 4, 2, 1.5, 0)) == doctest::Approx(0.0));
  CHECK(viewing_angle(BoundingBox3D(0, 10, 0, 4, 2, 1.5, kPi / 2)) == doctest::Approx(0.0));
  CHECK(viewing_angle(BoundingBox3D(10, 0, 0, 4, 2, 1.5, kPi)) == doctest::Approx(kPi));
  // Center on the sensor axis: defined as the yaw.
  CHECK(viewing_angle(BoundingBox3D(0, 0, 5, 1, 1, 1, 0.7)) == doctest::Approx(0.7));
}

TEST_CASE("viewing angle is invariant under rotating the scene about the sensor") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const BoundingBox3D b = random_box(rng, 50);
    const double phi = uniform(rng, -10, 10);
    const double before = viewing_angle(b);
    const double after = viewing_angle(transform_box(b, phi, 0, 0, 0));
    // Compare on the circle: both values sit in (-pi, pi].
    CHECK(std::abs(wrap_angle(after - before)) < 1e-9);
  }
}

TEST_CASE("angle encoding") {
  const auto e0 = angle_encode(0.0);
  CHECK(e0[0] == doctest::Approx(1.0));
  CHECK(e0[1] == doctest::Approx(0.0));
  const auto e1 = angle_encode(kPi / 2);
  CHECK(e1[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(e1[1] == doctest::Approx(1.0));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const double t = uniform(rng, -20, 20);
    const auto a = angle_encode(t), b = angle_encode(t + 2 * kPi);
    CHECK(std::hypot(a[0], a[1]) == doctest::Approx(1.0));
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
  }
}

TEST_CASE("points_in_box examples") {
  const BoundingBox3D box(1, 2, 3, 4, 2, 1, 0);
  const std::vector<Point> pts = {{1, 2, 3, 0.5, 0.5},       // center
                                  {3, 3, 3.5, 0.1, 0.1},     // corner, on the boundary
                                  {3.0001, 2, 3, 0, 0},      // just outside
                                  {1, 2, 3.6, 0, 0}};        // above the top face
  const auto inside = points_in_box(pts, box);
  REQUIRE(inside.size() == 2);
  CHECK(inside[0].intensity == 0.5);
  CHECK(inside[1].x == 3.0);
  CHECK(points_in_box_indices(pts, box) == std::vector<std::uint32_t>{0, 1});
  CHECK(points_in_box({}, box).empty());

  // Unit cube at the origin rotated by 45 degrees keeps (0.6, 0, 0): local (0.424, -0.424, 0).
  const BoundingBox3D cube(0, 0, 0, 1, 1, 1, kPi / 4);
  const std::vector<Point> probe = {{0.6, 0, 0, 0, 0}, {0.72, 0, 0, 0, 0}};
  CHECK(points_in_box(probe, cube).size() == 1);
  const auto local = BoxFrame(cube).to_local(0.6, 0, 0);
  CHECK(local[0] == doctest::Approx(0.6 / std::sqrt(2.0)));
  CHECK(local[1] == doctest::Approx(-0.6 / std::sqrt(2.0)));
}

TEST_CASE("points_in_box commutes with rigid motion") {
  std::mt19937_64 rng(4);
  std::size_t compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const BoundingBox3D box = random_box(rng, 2);
    const double rot = uniform(rng, -kPi, kPi);
    const double tx = uniform(rng, -30, 30), ty = uniform(rng, -30, 30), tz = uniform(rng, -2, 2);
    const BoundingBox3D moved = transform_box(box, rot, tx, ty, tz);
    const BoxFrame frame(box);
    for (int i = 0; i < 200; ++i) {
      const Point p = random_point(rng, 4);
      const auto l = frame.to_local(p.x, p.y, p.z);
      const double margin = std::min({std::abs(std::abs(l[0]) - box.dx / 2),
                                      std::abs(std::abs(l[1]) - box.dy / 2),
                                      std::abs(std::abs(l[2]) - box.dz / 2)});
      if (margin < 1e-9) continue;  // boundary tolerance
      const Point q = transform_point(p, rot, tx, ty, tz);
      const std::vector<Point> a{p}, b{q};
      CHECK(points_in_box(a, box).size() == points_in_box(b, moved).size());
      ++compared;
    }
  }
  CHECK(compared > 30000);
}

TEST_CASE("canonicalize examples") {
  const BoundingBox3D box(5, -2, 1, 4, 2, 1.5, 0.3);
  // World position of the local corner (+dx/2, +dy/2, +dz/2).
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double lx = box.dx / 2, ly = box.dy / 2;
  const std::vector<Point> pts = {{box.cx, box.cy, box.cz, 0.25, 0.75},
                                  {box.cx + c * lx - s * ly, box.cy + s * lx + c * ly,
                                   box.cz + box.dz / 2, 0.5, 0.1}};
  const auto can = canonicalize(pts, box);
  CHECK(can[0].x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(can[0].y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(can[0].z == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(can[0].intensity == 0.25);
  CHECK(can[0].elongation == 0.75);
  CHECK(can[1].x == doctest::Approx(0.5));
  CHECK(can[1].y == doctest::Approx(0.5));
  CHECK(can[1].z == doctest::Approx(0.5));
  CHECK(can[1].intensity == 0.5);
}

TEST_CASE("canonical statistics are invariant under joint rigid motion") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundingBox3D box = random_box(rng, 3);
    std::vector<Point> pts;
    while (pts.size() < 30) {
      const Point p = random_point(rng, 6);
      if (BoxFrame(box).contains(p.x, p.y, p.z)) pts.push_back(p);
    }
    const double rot = uniform(rng, -kPi, kPi);
    const double tx = uniform(rng, -40, 40), ty = uniform(rng, -40, 40), tz = uniform(rng, -1, 1);
    std::vector<Point> moved;
    for (const auto& p : pts) moved.push_back(transform_point(p, rot, tx, ty, tz));
    const auto a = point_statistics(canonicalize(pts, box), ChannelSet::all());
    const auto b = point_statistics(canonicalize(moved, transform_box(box, rot, tx, ty, tz)),
                                    ChannelSet::all());
    REQUIRE(a.channels.size() == 5);
    for (std::size_t k = 0; k < a.channels.size(); ++k) {
      CHECK(std::abs(a.channels[k].mean - b.channels[k].mean) < 1e-6);
      CHECK(std::abs(a.channels[k].std - b.channels[k].std) < 1e-6);
      CHECK(std::abs(a.channels[k].min - b.channels[k].min) < 1e-6);
      CHECK(std::abs(a.channels[k].max - b.channels[k].max) < 1e-6);
    }
    // Spatial channels of in-box points are within the unit cube.
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(a.channels[k].min >= -0.5 - 1e-12);
      CHECK(a.channels[k].max <= 0.5 + 1e-12);
    }
  }
}

TEST_CASE("point statistics examples and invariants") {
  const std::vector<Point> one = {{0.1, -0.2, 0.3, 0.4, 0.5}};
  const auto s1 = point_statistics(one, ChannelSet::all());
  CHECK(s1.point_count == 1);
  for (std::size_t k = 0; k < 5; ++k) {
    const double v = channel_value(one[0], ChannelSet::all().channels()[k]);
    CHECK(s1.channels[k].mean == v);
    CHECK(s1.channels[k].min == v);
    CHECK(s1.channels[k].max == v);
    CHECK(s1.channels[k].std == 0.0);
  }

  const std::vector<Point> two = {{-0.5, 0, 0, 0, 0}, {0.5, 0, 0, 0, 0}};
  const auto s2 = point_statistics(two, ChannelSet::spatial());
  CHECK(s2.channels[0].mean == 0.0);
  CHECK(s2.channels[0].std == doctest::Approx(0.5));  // population form
  CHECK(s2.channels[0].min == -0.5);
  CHECK(s2.channels[0].max == 0.5);

  const auto empty = point_statistics({}, ChannelSet::all());
  CHECK(empty.point_count == 0);
  REQUIRE(empty.channels.size() == 5);
  for (const auto& c : empty.channels) {
    CHECK(c.mean == 0.0);
    CHECK(c.std == 0.0);
    CHECK(c.min == 0.0);
    CHECK(c.max == 0.0);
  }

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Point> pts(gace::testing::uniform_int(rng, 1, 40));
    for (auto& p : pts) p = random_point(rng, 0.5);
    const auto s = point_statistics(pts, ChannelSet::all());
    for (const auto& c : s.channels) {
      CHECK(c.min <= c.mean + 1e-15);
      CHECK(c.mean <= c.max + 1e-15);
      CHECK(c.std >= 0.0);
    }
  }
}

TEST_CASE("channel sets") {
  CHECK(ChannelSet::all().size() == 5);
  CHECK(ChannelSet::spatial().size() == 3);
  const auto no_elong = ChannelSet::all().without(StatChannel::kElongation);
  CHECK(no_elong.size() == 4);
  CHECK_FALSE(no_elong.contains(StatChannel::kElongation));
  CHECK(ChannelSet::from_mask(ChannelSet::all().mask()) == ChannelSet::all());
}

TEST_CASE("bev overlap examples") {
  const BoundingBox3D a(0, 0, 0, 4, 2, 1, 0.4);
  CHECK(bev_overlap_area(a, a) == doctest::Approx(8.0));
  CHECK(bev_overlap_area(a, BoundingBox3D(20, 0, 0, 4, 2, 1, 0)) == 0.0);
  const BoundingBox3D sq(0, 0, 0, 1, 1, 1, 0), rot(0, 0, 0, 1, 1, 1, kPi / 4);
  CHECK(bev_overlap_area(sq, rot) == doctest::Approx(kOctagonArea).epsilon(1e-12));
  CHECK(polygon_area(std::vector<std::array<double, 2>>{{0, 0}, {2, 0}, {2, 3}, {0, 3}}) ==
        doctest::Approx(6.0));
}

TEST_CASE("bev overlap agrees with a Monte Carlo estimate") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const BoundingBox3D a = random_box(rng, 1.5), b = random_box(rng, 1.5);
    const double exact = bev_overlap_area(a, b);
    const double mc = monte_carlo_overlap(a, b, 200000, rng);
    // 2e5 samples over at most ~100 m^2: loose bound; the full-size check runs in acceptance.
    CHECK(std::abs(exact - mc) < 0.05);
    CHECK(exact == bev_overlap_area(b, a));
    CHECK(exact >= 0.0);
  }
}

TEST_CASE("iou3d examples") {
  const BoundingBox3D a(1, 2, 3, 4, 2, 1.5, 0.7);
  CHECK(iou3d(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  const BoundingBox3D c0(0, 0, 0, 1, 1, 1, 0), c1(0.5, 0, 0, 1, 1, 1, 0);
  CHECK(iou3d(c0, c1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou3d(c0, BoundingBox3D(0, 0, 5, 1, 1, 1, 0)) == 0.0);
  // Touching z faces share no volume.
  CHECK(iou3d(c0, BoundingBox3D(0, 0, 1, 1, 1, 1, 0)) == 0.0);
  const BoundingBox3D r45(0, 0, 0, 1, 1, 1, kPi / 4);
  CHECK(iou3d(c0, r45) == doctest::Approx(kOctagonArea / (2.0 - kOctagonArea)).epsilon(1e-12));
  CHECK(iou3d(c0, r45) == doctest::Approx(0.70711).epsilon(1e-4));
}

TEST_CASE("iou3d is symmetric and bounded") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 5000; ++i) {
    const BoundingBox3D a = random_box(rng, 2), b = random_box(rng, 2);
    const double ab = iou3d(a, b);
    CHECK(ab == iou3d(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(std::abs(iou3d(a, a) - 1.0) < 1e-9);
  }
}

TEST_CASE("bev corners are counter-clockwise with the right area") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const BoundingBox3D b = random_box(rng, 5);
    const auto c = b.bev_corners();
    double signed_area = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& p = c[k];
      const auto& q = c[(k + 1) % 4];
      signed_area += p[0] * q[1] - q[0] * p[1];
    }
    CHECK(signed_area / 2 == doctest::Approx(b.dx * b.dy));
  }
}
