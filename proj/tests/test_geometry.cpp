#include <random>

#include "commelec/geometry.hpp"
#include "doctest.h"

using namespace commelec;

TEST_CASE("convex hull of a square with interior points") {
  std::vector<PQ> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.2, 0.7}};
  auto h = convex_hull(pts);
  CHECK(h.size() == 4);
  CHECK(polygon_is_convex_ccw(h));
  for (const auto& p : pts) CHECK(polygon_contains(h, p, 1e-12));
}

TEST_CASE("hull handles degenerate inputs") {
  CHECK(convex_hull({{2, 3}}).size() == 1);
  auto seg = convex_hull({{0, 0}, {1, 1}, {2, 2}, {0.5, 0.5}});
  CHECK(seg.size() == 2);
  CHECK(polygon_contains(seg, {1.5, 1.5}, 1e-9));
  CHECK(!polygon_contains(seg, {1.5, 1.6}, 1e-9));
}

TEST_CASE("random points always inside their own hull") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<PQ> pts;
    for (int i = 0; i < 40; ++i) pts.push_back({u(rng), u(rng)});
    auto h = convex_hull(pts);
    CHECK(polygon_is_convex_ccw(h, 1e-9));
    for (const auto& p : pts) CHECK(polygon_contains(h, p, 1e-7));
  }
}

TEST_CASE("polygon projection is idempotent and feasible") {
  std::vector<PQ> tri = {{0, 0}, {4, 0}, {0, 4}};
  PQ inside{1, 1};
  CHECK(dist(polygon_project(tri, inside), inside) == doctest::Approx(0.0));
  PQ out{5, 5};
  PQ pr = polygon_project(tri, out);
  CHECK(polygon_contains(tri, pr, 1e-9));
  CHECK(pr.p == doctest::Approx(2.0));
  CHECK(pr.q == doctest::Approx(2.0));
  // projection no farther than any vertex
  for (const auto& v : tri) CHECK(dist(out, pr) <= dist(out, v) + 1e-12);
}

TEST_CASE("box vertices collapse on degenerate dimensions") {
  Box b{1, 1, -2, 2};
  CHECK(b.vertices().size() == 2);
  Box pt{3, 3, 4, 4};
  CHECK(pt.vertices().size() == 1);
  Box full{0, 1, 0, 1};
  CHECK(full.vertices().size() == 4);
}

TEST_CASE("centroid of a square") {
  std::vector<PQ> sq = {{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  PQ c = polygon_centroid(sq);
  CHECK(c.p == doctest::Approx(1.0));
  CHECK(c.q == doctest::Approx(1.0));
}
