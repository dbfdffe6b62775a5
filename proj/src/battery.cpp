#include "commelec/battery.hpp"

#include <algorithm>
#include <cmath>

namespace commelec {

double battery_emf(const BatteryParams& par, double soc) {
  return par.v_nom *
         (par.emf_low_frac + (par.emf_high_frac - par.emf_low_frac) * soc);
}

double battery_capacity_coulomb(const BatteryParams& par) {
  return par.rated_kwh * 3.6e6 / par.v_nom;  // Ws / V = A s
}

TtcState ttc_step_current(const BatteryParams& par, TtcState st, double i_a,
                          double dt_s) {
  if (st.tripped) i_a = 0.0;
  if (st.soc <= 0.0 && i_a > 0.0) i_a = 0.0;  // empty, cannot discharge
  if (st.soc >= 1.0 && i_a < 0.0) {
    st.tripped = true;  // charging a full pack trips the breaker
    i_a = 0.0;
  }
  const double e1 = std::exp(-dt_s / par.tau1_s);
  const double e2 = std::exp(-dt_s / par.tau2_s);
  st.v1 = i_a * par.r1_ohm + (st.v1 - i_a * par.r1_ohm) * e1;
  st.v2 = i_a * par.r2_ohm + (st.v2 - i_a * par.r2_ohm) * e2;
  st.soc -= i_a * dt_s / battery_capacity_coulomb(par);
  st.soc = std::clamp(st.soc, 0.0, 1.0);
  st.i_dc = i_a;
  st.v_dc = battery_emf(par, st.soc) - st.v1 - st.v2 - par.r0_ohm * i_a;
  return st;
}

TtcState ttc_step(const BatteryParams& par, TtcState st, double p_dc_kw,
                  double dt_s) {
  const double p_w = p_dc_kw * 1000.0;
  const double e_eff = battery_emf(par, st.soc) - st.v1 - st.v2;
  // (e_eff - R0 I) I = P  ->  R0 I^2 - e_eff I + P = 0
  const double disc = e_eff * e_eff - 4.0 * par.r0_ohm * p_w;
  double i;
  if (disc <= 0.0) {
    i = e_eff / (2.0 * par.r0_ohm);  // maximum deliverable power point
  } else {
    i = (e_eff - std::sqrt(disc)) / (2.0 * par.r0_ohm);
  }
  return ttc_step_current(par, st, i, dt_s);
}

EssAgent::EssAgent(std::string id, BatteryParams par, double initial_soc)
    : id_(std::move(id)), par_(par) {
  ttc_.soc = initial_soc;
  ttc_.v_dc = battery_emf(par_, initial_soc);
  ttc_.i_dc = 0.0;
  r_t_ = par_.r0_ohm + par_.r1_ohm + par_.r2_ohm;  // prior before measurements
  e_t_ = battery_emf(par_, initial_soc);
  rebuild_profile();
}

void EssAgent::refresh_estimates() {
  const double dv = ttc_.v_dc - last_v_;
  const double di = ttc_.i_dc - last_i_;
  // only meaningful current steps carry resistance information; small steps
  // are dominated by the relaxation of the RC branches
  if (have_last_ && std::abs(di) > 0.5) {
    double r = dv / di;
    const double prior = par_.r0_ohm + par_.r1_ohm + par_.r2_ohm;
    if (r < -1e-6) r_t_ = std::clamp(-r, 0.25 * prior, 4.0 * prior);
  }
  e_t_ = std::clamp(r_t_ * ttc_.i_dc + ttc_.v_dc, 0.5 * par_.v_min,
                    1.05 * par_.v_max);
  last_v_ = ttc_.v_dc;
  last_i_ = ttc_.i_dc;
  have_last_ = true;
}

EssAgent::DcBounds EssAgent::dc_power_bounds(double e, double r,
                                             const BatteryParams& par) {
  const double p_min_w = std::max(par.v_max * (e - par.v_max) / r,
                                  (e - r * par.i_min_a) * par.i_min_a);
  const double pv_max_w = (0.5 * e > par.v_min)
                              ? e * e / (4.0 * r)
                              : par.v_min * (e - par.v_min) / r;
  const double pi_max_w = (0.5 * e / r > par.i_max_a)
                              ? (e - r * par.i_max_a) * par.i_max_a
                              : e * e / (4.0 * r);
  return {p_min_w / 1000.0, std::min(pv_max_w, pi_max_w) / 1000.0};
}

EssAgent::DcBounds EssAgent::dc_bounds() const {
  return dc_power_bounds(e_t_, r_t_, par_);
}

void EssAgent::rebuild_profile() {
  if (disconnected_ || ttc_.tripped) {
    profile_ = PQProfile::singleton({0, 0});
    return;
  }
  DcBounds dc = dc_bounds();
  const double s_r = par_.conv.s_rated_kva;
  // the converter cannot exceed its rating regardless of the pack bounds
  const double p_ac_min = std::clamp(ac_from_dc(par_.conv, dc.p_min), -s_r, s_r);
  const double p_ac_max =
      std::clamp(ac_from_dc(par_.conv, dc.p_max), p_ac_min, s_r);
  profile_.constraints.clear();
  for (auto& c : converter_region(par_.conv)) profile_.constraints.push_back(c);
  profile_.constraints.push_back(Interval{p_ac_min, p_ac_max, -s_r, s_r});
}

Advertisement EssAgent::make_advertisement(std::int64_t t_us) {
  refresh_estimates();
  rebuild_profile();
  Advertisement ad;
  ad.agent_id = id_;
  ad.timestamp_us = t_us;
  ad.profile = profile_;
  ad.belief = BeliefIdeal{};
  if (disconnected_ || ttc_.tripped) {
    ad.cost = CostConstant{};
  } else {
    CostPolySoc cost;
    cost.k = par_.cost_k;
    cost.a = par_.cost_a;
    cost.b = par_.cost_b;
    cost.c = par_.cost_c;
    cost.dsoc = par_.soc_target - ttc_.soc;
    cost.center = 0.0;
    cost.scale = par_.rated_kva;
    ad.cost = cost;
  }
  return ad;
}

void EssAgent::apply_request(const PQ& target_kw) {
  if (disconnected_ || ttc_.tripped) {
    target_ = {0, 0};
    return;
  }
  target_ = project_to_profile(profile_, target_kw);
}

PQ EssAgent::actual() const {
  if (disconnected_ || ttc_.tripped) return {0, 0};
  return target_;
}

void EssAgent::set_slack_actual(const PQ& kw) {
  if (disconnected_ || ttc_.tripped) {
    target_ = {0, 0};
    return;
  }
  target_ = kw;
}

void EssAgent::physics_step(double dt_s) {
  const double p_dc = dc_from_ac(par_.conv, actual().p);
  ttc_ = ttc_step(par_, ttc_, p_dc, dt_s);
  if (ttc_.tripped) target_ = {0, 0};
}

void EssAgent::disconnect() {
  disconnected_ = true;
  target_ = {0, 0};
}

}  // namespace commelec
