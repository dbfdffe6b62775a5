#include <random>

#include "commelec/belief.hpp"
#include "commelec/cost.hpp"
#include "commelec/message.hpp"
#include "doctest.h"

using namespace commelec;

TEST_CASE("ideal belief returns the request") {
  BeliefDescriptor bf = BeliefIdeal{};
  auto s = belief_set(bf, {5, 2});
  CHECK(set_member(s, {5, 2}));
  CHECK(!set_member(s, {5.001, 2}));
}

TEST_CASE("pv drop belief follows the advertised segment rule") {
  // dp_max=4, cos_min=0.8, u=(10,2): endpoint Q' = min(6*0.75, 2) = 2
  BeliefDescriptor bf = BeliefPvDrop{4.0, 0.8};
  auto s = belief_set(bf, {10, 2});
  CHECK(set_member(s, {10, 2}));
  CHECK(set_member(s, {6, 2}));   // endpoint
  CHECK(set_member(s, {8, 2}));   // interior
  CHECK(!set_member(s, {5, 2}));  // beyond the drop
  CHECK(!set_member(s, {8, 3}));

  Box r = belief_rectangle(bf, {10, 2});
  CHECK(r.p_lo == doctest::Approx(6.0));
  CHECK(r.p_hi == doctest::Approx(10.0));
  CHECK(r.q_lo == doctest::Approx(2.0));
  CHECK(r.q_hi == doctest::Approx(2.0));
}

TEST_CASE("pv drop belief rides the cone when Q is large") {
  // u=(10,6), drop to P'=6; cone binds below P = 6/0.75 = 8
  BeliefDescriptor bf = BeliefPvDrop{4.0, 0.8};
  auto s = belief_set(bf, {10, 6});
  CHECK(set_member(s, {10, 6}));
  CHECK(set_member(s, {9, 6}));
  CHECK(set_member(s, {6, 4.5}));             // endpoint on the cone edge
  CHECK(set_member(s, {7, 0.75 * 7.0}));      // on the cone edge
  CHECK(!set_member(s, {7, 6}));              // off the path
  Box r = belief_rectangle(bf, {10, 6});
  CHECK(r.q_lo == doctest::Approx(4.5));
  CHECK(r.q_hi == doctest::Approx(6.0));
}

TEST_CASE("boiler belief with no predicted violation is the request") {
  BeliefDescriptor bf = BeliefWbSet{47.0, true, false, false};
  auto s = belief_set(bf, {-20, 0});
  CHECK(set_member(s, {-20, 0}));
  CHECK(!set_member(s, {0, 0}));
  CHECK(!set_member(s, {-47, 0}));
}

TEST_CASE("boiler belief under low-energy risk includes full power") {
  BeliefDescriptor bf = BeliefWbSet{47.0, true, false, true};
  CHECK(check_validity(PQProfile::interval_p(-47, 0), bf, {-20, 0}, {-47, 0}));
  CHECK(check_validity(PQProfile::interval_p(-47, 0), bf, {-20, 0}, {-20, 0}));
  CHECK(!check_validity(PQProfile::interval_p(-47, 0), bf, {-20, 0}, {-30, 0}));
}

TEST_CASE("uncontrollable load belief covers the semicircle") {
  BeliefDescriptor bf = BeliefUlArea{15.0};
  auto s = belief_set(bf, {0, 0});
  CHECK(set_member(s, {-15, 0}));
  CHECK(set_member(s, {-10, 10}));
  CHECK(set_member(s, {-10, -10}));
  CHECK(!set_member(s, {1, 0}));
  CHECK(!set_member(s, {-12, 12}));  // rho > 15
  Box r = belief_rectangle(bf, {0, 0});
  CHECK(r.p_lo == doctest::Approx(-15));
  CHECK(r.p_hi == doctest::Approx(0));
  CHECK(r.q_lo == doctest::Approx(-15));
  CHECK(r.q_hi == doctest::Approx(15));
}

TEST_CASE("sg band belief is a singleton inside the small capability") {
  BeliefSgBand band;
  band.cap_small = PQProfile::disc(9.0);
  band.cap_sweep = {PQProfile::disc(9.0), PQProfile::disc(10.0),
                    PQProfile::disc(11.0)};
  BeliefDescriptor bf = band;
  auto s1 = belief_set(bf, {4, 3});
  CHECK(set_member(s1, {4, 3}));
  // outside cap_small: union of projections over the sweep
  auto s2 = belief_set(bf, {9.5, 0});
  CHECK(set_member(s2, {9.0, 0}));
  CHECK(set_member(s2, {9.5, 0}));
  CHECK(!set_member(s2, {8.0, 0}));
  Box r = belief_rectangle(bf, {9.5, 0});
  CHECK(r.contains({9.0, 0}));
  CHECK(r.contains({9.5, 0}));
}

TEST_CASE("superset property over random beliefs and requests") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-20, 20), upos(0, 20);
  for (int rep = 0; rep < 10000; ++rep) {
    BeliefDescriptor bf;
    PQ req{};
    switch (rep % 4) {
      case 0:
        bf = BeliefIdeal{};
        req = {u(rng), u(rng)};
        break;
      case 1:
        bf = BeliefPvDrop{upos(rng) * 0.3, 0.8};
        req = {upos(rng), 0.3 * u(rng)};
        break;
      case 2:
        bf = BeliefWbSet{upos(rng) + 1, true, rep % 8 < 4, rep % 16 < 8};
        req = {-upos(rng), 0};
        break;
      default:
        bf = BeliefUlArea{upos(rng) + 1};
        req = {0, 0};
        break;
    }
    Box rect = belief_rectangle(bf, req);
    auto s = belief_set(bf, req);
    // sample the set and require containment in the rectangle
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, SetPoints>) {
            for (const auto& p : v.pts) CHECK(rect.contains(p, 1e-9));
          } else if constexpr (std::is_same_v<T, SetPolyline>) {
            for (size_t i = 0; i + 1 < v.pts.size(); ++i)
              for (double t = 0; t <= 1.0; t += 0.25) {
                PQ p = v.pts[i] + (v.pts[i + 1] - v.pts[i]) * t;
                CHECK(rect.contains(p, v.tube + 1e-9));
              }
          } else if constexpr (std::is_same_v<T, SetSemicircle>) {
            std::uniform_real_distribution<double> ang(M_PI, 2 * M_PI),
                rr(0, v.rho_max);
            for (int k = 0; k < 4; ++k) {
              double a = ang(rng), radius = rr(rng);
              PQ p{radius * std::sin(a - M_PI / 2) * 0 - radius * std::cos(a - M_PI),
                   0};
              // sample directly: p <= 0 half of the disc
              p = {-std::abs(radius * std::cos(a)), radius * std::sin(a)};
              CHECK(rect.contains(p, 1e-9));
            }
          }
        },
        s);
  }
}

TEST_CASE("validity examples") {
  // battery: actual equals requested
  CHECK(check_validity(PQProfile::disc(30), BeliefIdeal{}, {10, 5}, {10, 5}));
  // PV: requested (10,0), actual (7,0), dp_max=4
  CHECK(check_validity(PQProfile::disc(30), BeliefPvDrop{4.0, 0.8}, {10, 0},
                       {7, 0}));
  CHECK(!check_validity(PQProfile::disc(30), BeliefPvDrop{4.0, 0.8}, {10, 0},
                        {5, 0}));
  // requested outside profile is a domain error
  CHECK_THROWS_AS(
      check_validity(PQProfile::disc(5), BeliefIdeal{}, {10, 0}, {10, 0}),
      DomainError);
}

TEST_CASE("cost examples") {
  CostDescriptor soc = CostPolySoc{1, 1, 0.2, 1, 0.0, 0.0, 30.0};
  CHECK(eval_cost(soc, 12.0, 0) == 0.0);  // zero factor at the target state
  CHECK(cost_gradient(soc, 12.0, 0).p == 0.0);

  CostDescriptor lin = CostLinearPQuadQ{1.0, 1.0};
  CHECK(eval_cost(lin, 3, 2) == doctest::Approx(1.0));
  CHECK(cost_gradient(lin, 3, 2).p == doctest::Approx(-1.0));
  CHECK(cost_gradient(lin, 3, 2).q == doctest::Approx(4.0));

  CostDescriptor zero = CostConstant{};
  CHECK(eval_cost(zero, 100, -50) == 0.0);
  CHECK(cost_gradient(zero, 100, -50).p == 0.0);
}

TEST_CASE("polynomial cost signs steer toward the target state") {
  // above target (dsoc < 0): discharging (P>0) must be rewarded
  CostDescriptor c = CostPolySoc{1, 1, 0.2, 1, -0.4, 0.0, 30.0};
  CHECK(eval_cost(c, 10, 0) < 0.0);
  CHECK(eval_cost(c, -10, 0) > 0.0);
  // below target: charging rewarded
  CostDescriptor c2 = CostPolySoc{1, 1, 0.2, 1, +0.4, 0.0, 30.0};
  CHECK(eval_cost(c2, -10, 0) < 0.0);
  CHECK(eval_cost(c2, 10, 0) > 0.0);
}

TEST_CASE("cost gradients match finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-25, 25);
  const double h = 1e-6;
  std::vector<CostDescriptor> variants;
  variants.push_back(CostPolySoc{2.0, 1.0, 0.2, 1.0, -0.35, 3.0, 30.0});
  variants.push_back(CostLinearPQuadQ{1.5, 0.3});
  variants.push_back(CostEfficiency{5.0, {5, 10, 20, 25, 30}, {0.6, 0.8, 0.9, 0.92, 0.9}});
  CostInterpGrid grid;
  grid.pts = {{-10, -10}, {10, -10}, {10, 10}, {-10, 10}, {0, 0}};
  grid.vals = {1.0, 2.0, -1.0, 0.5, 0.0};
  grid.tris = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  variants.push_back(grid);

  for (const auto& c : variants) {
    int checked = 0;
    for (int rep = 0; rep < 5000 && checked < 100; ++rep) {
      double p = u(rng), q = u(rng);
      PQ g = cost_gradient(c, p, q);
      double fdp = (eval_cost(c, p + h, q) - eval_cost(c, p - h, q)) / (2 * h);
      double fdq = (eval_cost(c, p, q + h) - eval_cost(c, p, q - h)) / (2 * h);
      // skip kinks of the piecewise families
      if (std::holds_alternative<CostEfficiency>(c)) {
        bool near = false;
        for (double s : {5.0, 10.0, 20.0, 25.0, 30.0})
          if (std::abs(p - s) < 1e-3) near = true;
        if (near || p < 5 || p > 30) continue;
      }
      if (std::holds_alternative<CostInterpGrid>(c)) {
        if (std::abs(p) > 9 || std::abs(q) > 9) continue;
        if (std::abs(std::abs(p) - std::abs(q)) < 1e-3) continue;  // edges
      }
      ++checked;
      double sp = std::max({std::abs(fdp), std::abs(g.p), 1e-9});
      double sq = std::max({std::abs(fdq), std::abs(g.q), 1e-9});
      CHECK(std::abs(fdp - g.p) / sp < 1e-6);
      CHECK(std::abs(fdq - g.q) / sq < 1e-6);
    }
    CHECK(checked == 100);
  }
}

TEST_CASE("interpolation is exact at vertices and linear on edges") {
  CostInterpGrid grid;
  grid.pts = {{0, 0}, {4, 0}, {0, 4}};
  grid.vals = {1.0, 5.0, 9.0};
  grid.tris = {{0, 1, 2}};
  CostDescriptor c = grid;
  CHECK(eval_cost(c, 0, 0) == doctest::Approx(1.0));
  CHECK(eval_cost(c, 4, 0) == doctest::Approx(5.0));
  CHECK(eval_cost(c, 2, 0) == doctest::Approx(3.0));  // midpoint mean
  CHECK(eval_cost(c, 0, 2) == doctest::Approx(5.0));
}

TEST_CASE("wire round trip is the identity on fuzzed messages") {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> u(-100, 100);
  std::uniform_int_distribution<int> pick(0, 5), cost_pick(0, 4), len(0, 12);
  for (int rep = 0; rep < 1000; ++rep) {
    Advertisement ad;
    ad.agent_id = "agent" + std::to_string(rep % 17);
    ad.timestamp_us = rep * 100000;
    PQProfile prof;
    prof.constraints.push_back(Disc{{u(rng), u(rng)}, std::abs(u(rng))});
    if (rep % 3 == 0) prof.constraints.push_back(Cone{0.8, -1});
    if (rep % 4 == 0) {
      Polygon poly;
      for (int i = 0; i < 3 + len(rng); ++i) poly.verts.push_back({u(rng), u(rng)});
      prof.constraints.push_back(poly);
    }
    ad.profile = prof;
    switch (pick(rng)) {
      case 0: ad.belief = BeliefIdeal{}; break;
      case 1: ad.belief = BeliefPvDrop{std::abs(u(rng)), 0.8}; break;
      case 2: ad.belief = BeliefWbSet{std::abs(u(rng)), true, true, false}; break;
      case 3: ad.belief = BeliefUlArea{std::abs(u(rng))}; break;
      case 4: {
        BeliefSgBand b;
        b.cap_small = PQProfile::disc(std::abs(u(rng)));
        b.cap_sweep = {PQProfile::disc(10), PQProfile::disc(11)};
        ad.belief = b;
        break;
      }
      default: {
        BeliefAggRect b;
        for (int i = 0; i < 1 + len(rng); ++i) {
          b.reps.push_back({u(rng), u(rng)});
          b.rects.push_back(Box{-1, 1, -2, 2});
        }
        ad.belief = b;
        break;
      }
    }
    switch (cost_pick(rng)) {
      case 0: ad.cost = CostPolySoc{1, 1, 0.2, 1, u(rng) / 100, 0, 30}; break;
      case 1: ad.cost = CostLinearPQuadQ{u(rng), u(rng)}; break;
      case 2: ad.cost = CostEfficiency{1.0, {0, 10}, {0.5, 0.9}}; break;
      case 3: ad.cost = CostConstant{u(rng)}; break;
      default: {
        CostInterpGrid g;
        g.pts = {{0, 0}, {1, 0}, {0, 1}};
        g.vals = {u(rng), u(rng), u(rng)};
        g.tris = {{0, 1, 2}};
        ad.cost = g;
        break;
      }
    }
    auto bytes = encode_advertisement(ad);
    Advertisement back = decode_advertisement(bytes);
    CHECK(back == ad);
    CHECK(encode_advertisement(back) == bytes);

    Request rq{ad.agent_id, ad.timestamp_us, {u(rng), u(rng)}};
    CHECK(decode_request(encode_request(rq)) == rq);
  }
}

TEST_CASE("golden request bytes") {
  Request rq{"ess1", 42, {5.0, -1.5}};
  const std::vector<std::uint8_t> golden = {
      0x02,                                            // request tag
      0x04, 0x00, 0x00, 0x00, 'e',  's',  's',  '1',   // agent id
      0x2a, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // timestamp
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x14, 0x40,  // 5.0
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xf8, 0xbf,  // -1.5
  };
  CHECK(encode_request(rq) == golden);
  CHECK(decode_request(golden) == rq);
}

TEST_CASE("decode errors") {
  CHECK_THROWS_AS(decode_request({}), DecodeError);
  CHECK_THROWS_AS(decode_advertisement({0x07, 0x00}), DecodeError);
  auto bytes = encode_request(Request{"a", 1, {1, 2}});
  bytes.pop_back();
  CHECK_THROWS_AS(decode_request(bytes), DecodeError);
}
