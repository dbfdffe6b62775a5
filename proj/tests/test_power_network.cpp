#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "commelec/ampacity.hpp"
#include "commelec/grid.hpp"
#include "commelec/load_flow.hpp"
#include "commelec/sensitivity.hpp"
#include "doctest.h"

using namespace commelec;

namespace {

GridModel two_bus_lv1(double length_km = 1.0) {
  GridModel g;
  g.s_base_mva = 1.0;
  g.line_types["LV1"] = {0.284, 0.083, 0.0, 170.0, 4e4};
  g.buses = {{"A", 0.4, true}, {"B", 0.4, false}};
  g.lines = {{"A", "B", "LV1", length_km}};
  return g;
}

GridModel benchmark_model() {
  std::ifstream in(std::string(COMMELEC_DATA_DIR) + "/benchmark_grid.json");
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return grid_from_json(ss.str());
}

// Analytic 2-bus solution: |V2|^2 solves v^2 - v(2A + V0^2) + |S|^2|z|^2 = 0
// with A = P*r + Q*x (pu). Cross-checked by bisection on the same identity.
double two_bus_v2_analytic(double r, double x, double p, double q, double v0) {
  const double a = p * r + q * x;
  const double b2 = (p * p + q * q) * (r * r + x * x);
  const double bcoef = 2 * a + v0 * v0;
  const double disc = bcoef * bcoef - 4 * b2;
  REQUIRE(disc >= 0);
  return std::sqrt(0.5 * (bcoef + std::sqrt(disc)));
}

double two_bus_v2_bisect(double r, double x, double p, double q, double v0) {
  auto g = [&](double v) {
    // v*V0^2 - |v - S*conj(z)|^2 with S*conj(z) = A + jB
    const double A = p * r + q * x;
    const double B = q * r - p * x;
    return v * v0 * v0 - ((v - A) * (v - A) + B * B);
  };
  double lo = 0.5, hi = 1.5;
  REQUIRE(g(lo) * g(hi) <= 0);
  while (hi - lo > 1e-12) {
    double mid = 0.5 * (lo + hi);
    (g(lo) * g(mid) <= 0 ? hi : lo) = mid;
  }
  return std::sqrt(0.5 * (lo + hi));
}

}  // namespace

TEST_CASE("admittance of a single LV1 line in siemens") {
  Network net = Network::build(two_bus_lv1());
  const double z_base = 0.4 * 0.4 / 1.0;  // ohm
  std::complex<double> y01 = net.admittance()(0, 1) / z_base;
  std::complex<double> expect = -1.0 / std::complex<double>(0.284, 0.083);
  CHECK(std::abs(y01 - expect) < 1e-9 * std::abs(expect));
  CHECK(std::abs(net.admittance()(0, 0) - net.admittance()(1, 1)) < 1e-12);
}

TEST_CASE("admittance of a grid with no branches is the zero matrix") {
  GridModel g;
  g.buses = {{"A", 0.4, true}};
  Network net = Network::build(g);
  CHECK(net.admittance().rows() == 1);
  CHECK(std::abs(net.admittance()(0, 0)) == 0.0);
}

TEST_CASE("MV1 line carries jB/2 shunt on the diagonal") {
  GridModel g;
  g.s_base_mva = 1.0;
  g.line_types["MV1"] = {3.9378, 1.9689, 2.7798, 25.0, 4e4};
  g.buses = {{"A", 20.0, true}, {"B", 20.0, false}};
  g.lines = {{"A", "B", "MV1", 1.0}};
  Network net = Network::build(g);
  const double z_base = 400.0;
  std::complex<double> y_series = 1.0 / std::complex<double>(3.9378, 1.9689);
  double b_half = 0.5 * 2.7798e-6;  // siemens
  std::complex<double> diag_s = net.admittance()(0, 0) / z_base;
  CHECK(diag_s.imag() ==
        doctest::Approx(y_series.imag() + b_half).epsilon(1e-9));
  CHECK(diag_s.real() == doctest::Approx(y_series.real()).epsilon(1e-9));
}

TEST_CASE("disconnected graph raises a topology error") {
  GridModel g;
  g.s_base_mva = 1.0;
  g.line_types["LV1"] = {0.284, 0.083, 0.0, 170.0, 4e4};
  g.buses = {{"A", 0.4, true}, {"B", 0.4, false}, {"C", 0.4, false}};
  g.lines = {{"A", "B", "LV1", 1.0}, {"A", "B", "LV1", 1.0}};
  CHECK_THROWS_AS(Network::build(g), TopologyError);
}

TEST_CASE("zero injections give a flat no-flow state (no shunts)") {
  GridModel g;
  g.s_base_mva = 1.0;
  g.line_types["LV1"] = {0.284, 0.083, 0.0, 170.0, 4e4};
  g.buses = {{"A", 0.4, true}, {"B", 0.4, false}, {"C", 0.4, false}};
  g.lines = {{"A", "B", "LV1", 1.0}, {"B", "C", "LV1", 0.5}};
  Network net = Network::build(g);
  LoadFlowSolver solver(net);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(net.bus_count());
  auto st = solver.solve(z, z, 1.02);
  REQUIRE(st.has_value());
  for (int i = 0; i < net.bus_count(); ++i)
    CHECK(st->v_mag(i) == doctest::Approx(1.02).epsilon(1e-10));
  for (int l = 0; l < net.branch_count(); ++l)
    CHECK(st->i_line(l) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(st->loss_p == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("benchmark at zero injections carries only charging current") {
  Network net = Network::build(benchmark_model());
  LoadFlowSolver solver(net);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(net.bus_count());
  auto st = solver.solve(z, z, 1.0);
  REQUIRE(st.has_value());
  for (int i = 0; i < net.bus_count(); ++i)
    CHECK(std::abs(st->v_mag(i) - 1.0) < 5e-4);  // slight Ferranti rise
  CHECK(st->loss_p >= 0.0);
  CHECK(st->loss_p < 1e-4);
}

TEST_CASE("two-bus load flow matches the analytic oracle to 1e-8") {
  Network net = Network::build(two_bus_lv1());
  LoadFlowSolver solver(net);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
  p(1) = -0.01;  // 10 kW load
  auto st = solver.solve(p, q, 1.0);
  REQUIRE(st.has_value());
  const double r = 0.284 / 0.16, x = 0.083 / 0.16;
  const double v_exact = two_bus_v2_analytic(r, x, -0.01, 0.0, 1.0);
  const double v_bisect = two_bus_v2_bisect(r, x, -0.01, 0.0, 1.0);
  CHECK(v_exact == doctest::Approx(v_bisect).epsilon(1e-9));
  CHECK(std::abs(st->v_mag(1) - v_exact) < 1e-8);
  // slack absorbs load plus losses
  CHECK(st->slack_p == doctest::Approx(0.01 + st->loss_p).epsilon(1e-9));
  CHECK(st->loss_p > 0);
}

TEST_CASE("benchmark solves from flat start within 10 iterations") {
  Network net = Network::build(benchmark_model());
  LoadFlowSolver solver(net);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.bus_count());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(net.bus_count());
  // scenario-like initial injections (pu of 1 MVA)
  p(net.bus_index("M1")) = 0.05;    // SG at minimum
  p(net.bus_index("M2")) = -0.10;   // MV load
  q(net.bus_index("M2")) = -0.02;
  p(net.bus_index("L2")) = 0.006;   // microturbine
  p(net.bus_index("L3")) = 0.016;   // PV1+PV2
  p(net.bus_index("L5")) = 0.0024;  // PV4
  p(net.bus_index("L6")) = 0.008;   // PV3
  auto st = solver.solve(p, q, 1.0);
  REQUIRE(st.has_value());
  CHECK(st->iterations < 10);
  for (int i = 0; i < net.bus_count(); ++i)
    CHECK(std::abs(st->v_mag(i) - 1.0) <= 0.1);
  CHECK(st->max_mismatch < 1e-8);
  CHECK(st->loss_p >= 0.0);
}

TEST_CASE("non-convergence reported for absurd loading") {
  Network net = Network::build(two_bus_lv1());
  LoadFlowSolver solver(net);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
  p(1) = -5.0;  // 5 MW over a 1 km LV feeder
  auto st = solver.solve(p, q, 1.0);
  CHECK(!st.has_value());
}

TEST_CASE("voltage monotone in a single bus injection on the benchmark") {
  Network net = Network::build(benchmark_model());
  LoadFlowSolver solver(net);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.bus_count());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(net.bus_count());
  p(net.bus_index("M2")) = -0.1;
  const int probe = net.bus_index("L3");
  std::vector<Eigen::VectorXd> vs;
  for (double inj = -0.05; inj <= 0.0501; inj += 0.01) {
    p(probe) = inj;
    auto st = solver.solve(p, q, 1.0);
    REQUIRE(st.has_value());
    vs.push_back(st->v_mag);
  }
  for (int k = 0; k < net.bus_count(); ++k)
    for (size_t s = 1; s < vs.size(); ++s)
      CHECK(vs[s](k) >= vs[s - 1](k) - 1e-10);
}

TEST_CASE("sensitivities match central finite differences") {
  Network net = Network::build(benchmark_model());
  LoadFlowSolver solver(net);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> lv(-0.03, 0.03), mv(-0.2, 0.2);
  const double h = 1e-5;
  int states_checked = 0;
  for (int rep = 0; rep < 25 && states_checked < 20; ++rep) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(net.bus_count());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(net.bus_count());
    for (int i = 0; i < net.bus_count(); ++i) {
      if (i == net.slack_bus()) continue;
      bool is_mv = net.bus(i).base_kv > 1.0;
      p(i) = is_mv ? mv(rng) : lv(rng);
      q(i) = 0.5 * (is_mv ? mv(rng) : lv(rng));
    }
    auto st = solver.solve(p, q, 1.0);
    if (!st) continue;
    ++states_checked;
    auto sens = sensitivity_coefficients(solver, *st);
    const auto& pq = solver.pq_buses();
    for (size_t c = 0; c < pq.size() * 2; ++c) {
      const int bus = pq[c % pq.size()];
      const bool is_q = c >= pq.size();
      Eigen::VectorXd pp = p, qp = q, pm = p, qm = q;
      (is_q ? qp(bus) : pp(bus)) += h;
      (is_q ? qm(bus) : pm(bus)) -= h;
      // tight tolerance so solver noise stays below the FD quotient
      LoadFlowOptions warm;
      warm.warm = &*st;
      warm.tol = 1e-13;
      auto sp = solver.solve(pp, qp, 1.0, warm);
      auto sm = solver.solve(pm, qm, 1.0, warm);
      REQUIRE(sp.has_value());
      REQUIRE(sm.has_value());
      for (int k = 0; k < net.bus_count(); ++k) {
        double fd = (sp->v_mag(k) - sm->v_mag(k)) / (2 * h);
        double an = sens.k_v(k, c);
        double scale = std::max({std::abs(fd), std::abs(an), 1e-4});
        CHECK(std::abs(fd - an) / scale < 1e-4);
      }
      for (int l = 0; l < net.branch_count(); ++l) {
        // |I| is non-differentiable at zero current and the FD truncation
        // error grows like h^2/I^2 near the kink; skip near-dead branches
        if (st->i_line(l) < 1e-3) continue;
        double fd = (sp->i_line(l) - sm->i_line(l)) / (2 * h);
        double an = sens.k_i(l, c);
        double scale = std::max({std::abs(fd), std::abs(an), 1e-2});
        CHECK(std::abs(fd - an) / scale < 1e-4);
      }
      double fd_sp = (sp->slack_p - sm->slack_p) / (2 * h);
      CHECK(std::abs(fd_sp - sens.k_slack_p(c)) < 1e-4 * std::max(1.0, std::abs(fd_sp)));
    }
  }
  CHECK(states_checked == 20);
}

TEST_CASE("two-bus sensitivity sign and slack row") {
  Network net = Network::build(two_bus_lv1());
  LoadFlowSolver solver(net);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
  p(1) = -0.01;
  auto st = solver.solve(p, q, 1.0);
  REQUIRE(st.has_value());
  auto sens = sensitivity_coefficients(solver, *st);
  CHECK(sens.k_v(1, sens.col_p(1)) > 0.0);  // injection raises local voltage
  CHECK(sens.k_v(0, sens.col_p(1)) == 0.0);  // slack voltage is fixed
  // d(slack P)/d(P2) = dL/dP2 - 1, close to -1 in a lightly loaded grid
  CHECK(sens.k_slack_p(sens.col_p(1)) == doctest::Approx(-1.0).epsilon(0.1));
}

TEST_CASE("branch flow sensitivity matches finite differences") {
  Network net = Network::build(benchmark_model());
  LoadFlowSolver solver(net);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.bus_count());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(net.bus_count());
  p(net.bus_index("L3")) = 0.02;
  p(net.bus_index("M2")) = -0.15;
  auto st = solver.solve(p, q, 1.0);
  REQUIRE(st.has_value());
  const int br = 0;  // M0-M1 line
  auto fs = branch_flow_sensitivity(solver, *st, br, false);
  const double h = 1e-5;
  const int bus = net.bus_index("L3");
  auto sens = sensitivity_coefficients(solver, *st);
  Eigen::VectorXd pp = p, pm = p;
  pp(bus) += h;
  pm(bus) -= h;
  LoadFlowOptions tight;
  tight.tol = 1e-13;
  tight.warm = &*st;
  auto sp = solver.solve(pp, q, 1.0, tight);
  auto sm = solver.solve(pm, q, 1.0, tight);
  REQUIRE(sp.has_value());
  REQUIRE(sm.has_value());
  double fd_p = (branch_flow(net, *sp, br, false).real() -
                 branch_flow(net, *sm, br, false).real()) /
                (2 * h);
  CHECK(fs.dp(sens.col_p(bus)) == doctest::Approx(fd_p).epsilon(1e-4));
}

TEST_CASE("thevenin equivalents") {
  GridModel g;
  g.s_base_mva = 1.0;
  g.line_types["LV1"] = {0.284, 0.083, 0.0, 170.0, 4e4};
  g.buses = {{"A", 0.4, true}, {"B", 0.4, false}, {"C", 0.4, false}};
  g.lines = {{"A", "B", "LV1", 1.0}, {"B", "C", "LV1", 1.0}};
  Network net = Network::build(g);
  CHECK(std::abs(net.thevenin_equivalent(0)) == 0.0);
  std::complex<double> z = net.thevenin_equivalent(2) * 0.16;  // to ohm
  CHECK(z.real() == doctest::Approx(2 * 0.284).epsilon(1e-9));
  CHECK(z.imag() == doctest::Approx(2 * 0.083).epsilon(1e-9));

  // driving-point oracle: delete slack row/col of Y, invert
  Eigen::MatrixXcd y = net.admittance();
  Eigen::MatrixXcd yr = y.block(1, 1, 2, 2);
  Eigen::MatrixXcd zr = yr.inverse();
  CHECK(std::abs(zr(1, 1) - net.thevenin_equivalent(2)) <
        1e-9 * std::abs(zr(1, 1)));
}

TEST_CASE("thevenin through MV line plus transformer vs driving point") {
  Network net = Network::build(benchmark_model());
  const int l0 = net.bus_index("L0");
  std::complex<double> z_path = net.thevenin_equivalent(l0);
  const int n = net.bus_count();
  Eigen::MatrixXcd y = net.admittance();
  // remove slack row/col (slack is bus 0 in the file)
  REQUIRE(net.slack_bus() == 0);
  Eigen::MatrixXcd yr = y.block(1, 1, n - 1, n - 1);
  Eigen::MatrixXcd zr = yr.inverse();
  std::complex<double> z_drive = zr(l0 - 1, l0 - 1);
  // MV shunt susceptance perturbs the driving-point value only slightly
  CHECK(std::abs(z_drive - z_path) < 1e-3 * std::abs(z_path));
}

TEST_CASE("dynamic ampacity follows the joule-integral rule") {
  const double stat = 31.0, es = 4e4;
  AmpacityParams par;
  DynamicAmpacity st{0.0, par.headroom * stat};

  SUBCASE("idle line keeps headroom") {
    for (int i = 0; i < 100; ++i)
      st = update_dynamic_ampacity(stat, es, st, 0.0, 1.0, par);
    CHECK(st.limit_a == doctest::Approx(1.3 * stat));
    CHECK(st.joule_a2s == 0.0);
  }

  SUBCASE("constant 1.2x overload exhausts at Es/I^2 seconds") {
    const double i = 1.2 * stat;
    const double t_exhaust = es / (i * i);
    double t = 0;
    const double dt = 0.01;
    while (st.limit_a > stat + 1e-9 && t < 2 * t_exhaust) {
      st = update_dynamic_ampacity(stat, es, st, i, dt, par);
      t += dt;
    }
    // limit collapses to static no later than the closed-form exhaustion time
    CHECK(t <= t_exhaust + 0.011);
    CHECK(st.joule_a2s <= es + i * i * dt + 1e-9);
  }

  SUBCASE("exhausted budget pins the limit at static") {
    st.joule_a2s = es;
    st = update_dynamic_ampacity(stat, es, st, 1.1 * stat, 0.1, par);
    CHECK(st.limit_a == doctest::Approx(stat));
  }

  SUBCASE("recovery is instant once below static") {
    st = update_dynamic_ampacity(stat, es, st, 1.25 * stat, 5.0, par);
    CHECK(st.joule_a2s > 0);
    st = update_dynamic_ampacity(stat, es, st, 0.9 * stat, 0.1, par);
    CHECK(st.joule_a2s == 0.0);
    CHECK(st.limit_a == doctest::Approx(1.3 * stat));
  }
}
