#include <cmath>
#include <random>

#include "commelec/profile.hpp"
#include "doctest.h"

using namespace commelec;

TEST_CASE("disc membership at the boundary") {
  PQProfile prof = PQProfile::disc(30.0);
  CHECK(profile_contains(prof, {30.0, 0.0}));
  CHECK(!profile_contains(prof, {30.1, 0.0}));
}

TEST_CASE("disc plus power-factor cone rejects low-cos-phi point") {
  PQProfile prof;
  prof.constraints.push_back(Disc{{}, 30.0});
  prof.constraints.push_back(Cone{0.8, +1});
  // |10|/sqrt(200) = 0.707 < 0.8
  CHECK(!profile_contains(prof, {10.0, 10.0}));
  CHECK(profile_contains(prof, {10.0, 7.0}));
}

TEST_CASE("singleton contains only its point") {
  PQProfile prof = PQProfile::singleton({3.0, -4.0});
  CHECK(profile_contains(prof, {3.0, -4.0}));
  CHECK(!profile_contains(prof, {3.0, -4.1}));
  CHECK(project_to_profile(prof, {100, 100}).p == doctest::Approx(3.0));
}

TEST_CASE("projection is identity inside and radial on a disc") {
  PQProfile prof = PQProfile::disc(30.0);
  PQ in{5, 5};
  PQ pr = project_to_profile(prof, in);
  CHECK(dist(pr, in) == doctest::Approx(0.0));
  PQ out = project_to_profile(prof, {40, 0});
  CHECK(out.p == doctest::Approx(30.0));
  CHECK(out.q == doctest::Approx(0.0));
}

// Grid-search oracle: nearest feasible point by brute force.
static PQ grid_search_nearest(const PQProfile& prof, const PQ& x, double lo,
                              double hi, double step) {
  PQ best{};
  double best_d = 1e100;
  for (double p = lo; p <= hi; p += step)
    for (double q = lo; q <= hi; q += step) {
      PQ c{p, q};
      if (!profile_contains(prof, c, 1e-9)) continue;
      double d = dist(c, x);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
  return best;
}

TEST_CASE("projection onto disc+halfplane+cone matches grid search") {
  PQProfile prof;
  prof.constraints.push_back(Disc{{}, 30.0});
  prof.constraints.push_back(HalfPlane{-1.0, 0.0, 0.0});  // P >= 0
  prof.constraints.push_back(Cone{0.8, +1});
  PQ x{-10.0, 40.0};
  PQ pr = project_to_profile(prof, x);
  CHECK(profile_contains(prof, pr, 1e-7));
  PQ oracle = grid_search_nearest(prof, x, -31, 31, 0.01);
  CHECK(dist(x, pr) <= dist(x, oracle) + 0.02);
  CHECK(std::abs(dist(x, pr) - dist(x, oracle)) <= 0.02);
}

TEST_CASE("projection beats random feasible samples") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-35, 35);
  PQProfile prof;
  prof.constraints.push_back(Disc{{}, 30.0});
  prof.constraints.push_back(Interval{-20.0, 5.0, -15.0, 25.0});
  for (int rep = 0; rep < 20; ++rep) {
    PQ x{u(rng), u(rng)};
    PQ pr = project_to_profile(prof, x);
    CHECK(profile_contains(prof, pr, 1e-7));
    for (int s = 0; s < 1000; ++s) {
      PQ c{u(rng), u(rng)};
      if (!profile_contains(prof, c)) continue;
      CHECK(dist(x, pr) <= dist(x, c) + 1e-6);
    }
  }
}

TEST_CASE("cone projection handles the apex region") {
  PQProfile prof;
  prof.constraints.push_back(Cone{0.9, +1});
  PQ pr = project_to_profile(prof, {-5.0, 0.0});
  CHECK(norm(pr) == doctest::Approx(0.0).epsilon(1e-9));
  // point above the cone projects onto the upper edge
  PQ pr2 = project_to_profile(prof, {1.0, 10.0});
  CHECK(profile_contains(prof, pr2, 1e-9));
  double t = std::sqrt(1 - 0.81) / 0.9;
  CHECK(pr2.q == doctest::Approx(t * pr2.p).epsilon(1e-6));
}
