#include <cmath>
#include <random>

#include "commelec/battery.hpp"
#include "commelec/boiler.hpp"
#include "commelec/converter.hpp"
#include "commelec/generator.hpp"
#include "commelec/pv.hpp"
#include "commelec/uload.hpp"
#include "doctest.h"

using namespace commelec;

TEST_CASE("converter efficiency is direction dependent") {
  ConverterSpec spec{30, 0.0, false, 0.97};
  CHECK(ac_from_dc(spec, 10.0) == doctest::Approx(9.7));
  CHECK(ac_from_dc(spec, -10.0) == doctest::Approx(-10.0 / 0.97));
  CHECK(dc_from_ac(spec, ac_from_dc(spec, 7.3)) == doctest::Approx(7.3));
  CHECK(dc_from_ac(spec, ac_from_dc(spec, -7.3)) == doctest::Approx(-7.3));
  ConverterSpec ideal{30, 0.0, false, 1.0};
  CHECK(ac_from_dc(ideal, 5.0) == 5.0);
  CHECK(ac_from_dc(ideal, -5.0) == -5.0);
}

TEST_CASE("unidirectional converter region rejects absorption") {
  ConverterSpec spec{10, 0.8, true, 1.0};
  PQProfile prof{converter_region(spec)};
  CHECK(!profile_contains(prof, {-1.0, 0.0}));
  CHECK(profile_contains(prof, {5.0, 0.0}));
  CHECK(!profile_contains(prof, {5.0, 5.0}));  // cos phi below 0.8
  CHECK(profile_contains(prof, {8.0, 5.0}));
}

TEST_CASE("dc power bound branch selection") {
  BatteryParams par;
  par.v_min = 40;
  par.v_max = 60;
  par.i_max_a = 1000;
  par.i_min_a = -1000;
  // E/2 = 24 < V_min: the 'otherwise' branch applies
  auto b = EssAgent::dc_power_bounds(48.0, 0.05, par);
  CHECK(b.p_max == doctest::Approx(40.0 * 8.0 / 0.05 / 1000.0));
  // with a permissive V_min the maximum-power point applies
  par.v_min = 10;
  par.i_max_a = 10000;
  auto b2 = EssAgent::dc_power_bounds(48.0, 0.05, par);
  CHECK(b2.p_max == doctest::Approx(48.0 * 48.0 / (4 * 0.05) / 1000.0));
}

TEST_CASE("ttc: idle pack keeps soc, rc branches decay") {
  BatteryParams par;
  TtcState st;
  st.soc = 0.7;
  st.v1 = 5.0;
  st.v2 = 3.0;
  for (int i = 0; i < 100; ++i) st = ttc_step(par, st, 0.0, 1.0);
  CHECK(st.soc == doctest::Approx(0.7));
  CHECK(std::abs(st.v1) < 5.0 * std::exp(-100.0 / par.tau1_s) + 1e-9);
  CHECK(std::abs(st.v2) < 3.0 * std::exp(-100.0 / par.tau2_s) + 1e-6);
}

TEST_CASE("ttc: coulomb counting at a 1C discharge") {
  BatteryParams par;
  TtcState st;
  st.soc = 0.9;
  const double c = battery_capacity_coulomb(par);
  const double i_1c = c / 3600.0;
  for (int k = 0; k < 1800; ++k) st = ttc_step_current(par, st, i_1c, 1.0);
  CHECK(st.soc == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("ttc: soc change equals integrated current within 1e-6") {
  BatteryParams par;
  TtcState st;
  st.soc = 0.6;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20, 20);
  double charge = 0;
  const double c = battery_capacity_coulomb(par);
  for (int k = 0; k < 2000; ++k) {
    st = ttc_step(par, st, u(rng), 0.01);
    charge += st.i_dc * 0.01;
  }
  CHECK(st.soc == doctest::Approx(0.6 - charge / c).epsilon(1e-6));
}

TEST_CASE("ttc: charging a full battery trips the breaker") {
  BatteryParams par;
  TtcState st;
  st.soc = 0.999999;
  for (int k = 0; k < 2000 && !st.tripped; ++k)
    st = ttc_step(par, st, -10.0, 0.1);
  CHECK(st.tripped);
  // discharging at full does not trip
  TtcState st2;
  st2.soc = 1.0;
  st2 = ttc_step(par, st2, 10.0, 0.1);
  CHECK(!st2.tripped);
}

TEST_CASE("ess agent implements in-bounds requests exactly") {
  BatteryParams par;  // 30 kVA / 30 kWh defaults
  EssAgent ess("ess1", par, 0.9);
  auto ad = ess.make_advertisement(0);
  CHECK(std::holds_alternative<BeliefIdeal>(ad.belief));
  ess.apply_request({10.0, 3.0});
  CHECK(ess.actual().p == doctest::Approx(10.0));
  CHECK(ess.actual().q == doctest::Approx(3.0));
  CHECK(check_validity(ad.profile, ad.belief, {10.0, 3.0}, ess.actual()));
  // out-of-disc request is projected, |S| <= S_r
  ess.apply_request({40.0, 0.0});
  CHECK(norm(ess.actual()) <= par.conv.s_rated_kva + 1e-9);
}

TEST_CASE("ess advertised cost vanishes at the target soc") {
  BatteryParams par;
  par.soc_target = 0.5;
  EssAgent ess("ess", par, 0.5);
  auto ad = ess.make_advertisement(0);
  CHECK(eval_cost(ad.cost, 10.0, 0.0) == 0.0);
  EssAgent high("ess", par, 0.9);
  auto ad2 = high.make_advertisement(0);
  CHECK(eval_cost(ad2.cost, 10.0, 0.0) < 0.0);   // discharge rewarded
  CHECK(eval_cost(ad2.cost, -10.0, 0.0) > 0.0);  // charge penalized
}

TEST_CASE("tripped ess advertises the zero singleton") {
  BatteryParams par;
  EssAgent ess("ess", par, 1.0);
  ess.apply_request({-10.0, 0.0});
  for (int k = 0; k < 100 && !ess.tripped(); ++k) ess.physics_step(0.1);
  CHECK(ess.tripped());
  auto ad = ess.make_advertisement(0);
  CHECK(profile_contains(ad.profile, {0, 0}));
  CHECK(!profile_contains(ad.profile, {1, 0}));
  CHECK(ess.actual().p == 0.0);
}

TEST_CASE("ess r_t estimation from dc measurement steps") {
  BatteryParams par;
  EssAgent ess("ess", par, 0.6);
  ess.make_advertisement(0);
  ess.apply_request({10.0, 0.0});
  for (int i = 0; i < 50; ++i) ess.physics_step(0.1);
  ess.make_advertisement(1);
  ess.apply_request({-5.0, 0.0});
  for (int i = 0; i < 50; ++i) ess.physics_step(0.1);
  ess.make_advertisement(2);
  // estimate lands near the true total internal resistance
  CHECK(ess.rt() > 0.5 * par.r0_ohm);
  CHECK(ess.rt() < 2.0 * (par.r0_ohm + par.r1_ohm + par.r2_ohm));
  CHECK(ess.et() > par.v_min);
  CHECK(ess.et() < par.v_max);
}

TEST_CASE("pv agent tracks request under the irradiance cap") {
  PvParams par;  // 10 kW rated
  PvAgent pv("pv1", par);
  // a passing cloud early in the window teaches the drop estimator
  pv.update_irradiance(1000.0, 0.0);
  pv.update_irradiance(650.0, 1.0);
  pv.update_irradiance(1000.0, 2.0);
  CHECK(pv.cap_kw() == doctest::Approx(10.0));
  auto ad = pv.make_advertisement(0);
  CHECK(std::get<BeliefPvDrop>(ad.belief).dp_max >= 3.0);
  pv.apply_request({5.0, 0.0});
  CHECK(pv.actual().p == doctest::Approx(5.0));

  // irradiance drop below the request: output follows the cap and stays in
  // the advertised drop belief
  pv.apply_request({10.0, 0.0});
  pv.update_irradiance(700.0, 3.0);
  CHECK(pv.actual().p == doctest::Approx(7.0));
  CHECK(check_validity(ad.profile, ad.belief, {10.0, 0.0}, pv.actual()));
}

TEST_CASE("pv rated 3 kW at full sun caps at 3 kW") {
  PvParams par;
  par.rated_kw = 3.0;
  par.conv = {3.0, 0.8, true, 1.0};
  PvAgent pv("pv4", par);
  pv.update_irradiance(1000.0, 0.0);
  CHECK(pv.cap_kw() == doctest::Approx(3.0));
  pv.update_irradiance(1400.0, 1.0);  // above-rated irradiance still caps
  CHECK(pv.cap_kw() == doctest::Approx(3.0));
}

TEST_CASE("pv drop estimate covers observed fast drops") {
  PvParams par;
  PvAgent pv("pv", par);
  for (int k = 0; k <= 100; ++k)
    pv.update_irradiance(1000.0 - 5.0 * k, k * 0.05);  // steady decline
  CHECK(pv.drop_estimate_kw() >= 1.0);  // 100 W/s observed over 1 s = 1 kW
  CHECK(pv.drop_estimate_kw() >= 0.2 * pv.cap_kw());
}

TEST_CASE("sg capability and implementation") {
  SgParams par;  // 250 kVA machine
  SgAgent sg("sg", par);
  auto ad = sg.make_advertisement(0);

  // deep inside the small capability: implemented equals the request
  sg.update_voltage(1.0);
  sg.apply_request({100.0, 0.0});
  CHECK(sg.actual().p == doctest::Approx(100.0));
  CHECK(sg.actual().q == doctest::Approx(0.0));
  auto s = belief_set(ad.belief, {100.0, 0.0});
  CHECK(std::holds_alternative<SetPoints>(s));

  // below minimum power: clamped to P_min
  sg.apply_request({10.0, 0.0});
  CHECK(sg.actual().p == doctest::Approx(0.2 * 250.0));

  // boundary request at depressed voltage shifts inward but stays in band
  PQ edge{0.0, 0.0};
  {
    // a point on the large capability boundary: stator disc at v_max
    edge = project_to_profile(sg_capability(par, par.v_max), {300.0, 80.0});
  }
  sg.apply_request(edge);
  sg.update_voltage(0.92);
  PQ act = sg.actual();
  CHECK(profile_contains(sg_capability(par, 0.92), act, 1e-6));
  CHECK(check_validity(ad.profile, ad.belief, edge, act, 1e-3));

  // V-sweep oracle: actual equals the projection at the measured voltage
  for (double v : {0.9, 0.95, 1.0, 1.05, 1.1}) {
    sg.update_voltage(v);
    PQ a = sg.actual();
    PQ oracle = project_to_profile(sg_capability(par, v), edge);
    CHECK(dist(a, oracle) < 1e-9);
    CHECK(check_validity(ad.profile, ad.belief, edge, a, 1e-3));
  }
}

TEST_CASE("boiler mode machine and energy integration") {
  BoilerParams par;  // WB2-like
  par.p_max_kw = 47.0;
  BoilerAgent wb("wb2", par, 2.5);
  wb.apply_request({-47.0, 0.0});
  // 47 kW for 60 s from 2.5 kWh -> 2.5 + 47/60
  wb.physics_step(0.0, 60.0);
  CHECK(wb.energy_kwh() == doctest::Approx(2.5 + 47.0 / 60.0));
  CHECK(wb.mode() == BoilerMode::Normal);
}

TEST_CASE("boiler forced heat below the minimum") {
  BoilerParams par;
  BoilerAgent wb("wb", par, 0.95);
  wb.apply_request({0.0, 0.0});  // request off
  wb.physics_step(1.0, 1.0);     // small drain; energy below e_min
  CHECK(wb.mode() == BoilerMode::ForcedHeat);
  CHECK(wb.actual().p == doctest::Approx(-par.p_max_kw));
  // heats until the lower margin, then releases to the request
  double t = 0;
  while (wb.mode() == BoilerMode::ForcedHeat && t < 1000) {
    wb.physics_step(0.0, 1.0);
    t += 1;
  }
  CHECK(wb.energy_kwh() >= par.e_margin_min_kwh - 1e-9);
  CHECK(wb.actual().p == 0.0);
}

TEST_CASE("boiler forced off above the maximum") {
  BoilerParams par;
  BoilerAgent wb("wb", par, 19.99);
  wb.apply_request({-50.0, 0.0});
  wb.physics_step(0.0, 10.0);
  CHECK(wb.mode() == BoilerMode::ForcedOff);
  CHECK(wb.actual().p == 0.0);
  // drains back to the upper margin before resuming
  double t = 0;
  while (wb.mode() == BoilerMode::ForcedOff && t < 1e5) {
    wb.physics_step(5.0, 10.0);
    t += 10;
  }
  CHECK(wb.energy_kwh() <= par.e_margin_max_kwh + 1e-9);
}

TEST_CASE("boiler belief flags") {
  BoilerParams par;
  BoilerAgent safe("wb", par, 10.0);
  auto ad = safe.make_advertisement(0, 0.1);
  auto bf = std::get<BeliefWbSet>(ad.belief);
  CHECK(bf.include_request);
  CHECK(!bf.include_zero);
  CHECK(!bf.include_full);

  BoilerAgent low("wb", par, 1.0005);  // a breath above e_min
  BoilerAgent lowfc("wb", par, 1.0005, 20.0, 30.0);  // heavy demand forecast
  auto ad2 = lowfc.make_advertisement(0, 0.1);
  auto bf2 = std::get<BeliefWbSet>(ad2.belief);
  CHECK(bf2.include_full);  // forced heating possible within the horizon
}

TEST_CASE("boiler energy never leaves the hysteresis envelope") {
  BoilerParams par;
  par.p_max_kw = 50;
  BoilerAgent wb("wb", par, 2.5);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> req(-50, 0), out(0, 10);
  const double step_slack = 50.0 * 1.0 / 3600.0;  // one-step energy change
  for (int k = 0; k < 20000; ++k) {
    if (k % 100 == 0) wb.apply_request({req(rng), 0.0});
    wb.physics_step(out(rng), 1.0);
    CHECK(wb.energy_kwh() >= -1e-9);
    CHECK(wb.energy_kwh() <= par.e_max_kwh + step_slack + 1e-9);
  }
}

TEST_CASE("uncontrollable load follows its profile and advertises a point") {
  TimeSeries p;
  p.t = {0, 60, 120};
  p.v = {0, -12, -6};
  UlAgent ul("ul", UlParams{15.0}, p, TimeSeries::constant(0.0));
  CHECK(ul.actual(30.0).p == doctest::Approx(-6.0));  // linear interpolation
  auto ad = ul.make_advertisement(0, 30.0);
  CHECK(profile_contains(ad.profile, {-6.0, 0.0}, 1e-9));
  CHECK(!profile_contains(ad.profile, {-7.0, 0.0}, 1e-9));
  CHECK(check_validity(ad.profile, ad.belief, {-6.0, 0.0}, ul.actual(45.0)));

  // zero-consumption profile advertises the zero singleton
  UlAgent zl("ul0", UlParams{15.0}, TimeSeries::constant(0.0),
             TimeSeries::constant(0.0));
  auto ad0 = zl.make_advertisement(0, 0.0);
  CHECK(profile_contains(ad0.profile, {0, 0}));
  CHECK(zl.actual(100.0).p == 0.0);

  // corrupted actual outside the semicircle fails the validity check
  CHECK(!check_validity(ad0.profile, ad0.belief, {0, 0}, {-20.0, 0.0}));
  CHECK(!check_validity(ad0.profile, ad0.belief, {0, 0}, {2.0, 0.0}));
}
