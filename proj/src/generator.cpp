#include "commelec/generator.hpp"

#include <cmath>

namespace commelec {

PQProfile sg_capability(const SgParams& par, double v_pu) {
  const double s = par.rated_kva;
  const double x = par.x_s_pu + par.x_t_pu;
  PQProfile prof;
  prof.constraints.push_back(
      Interval{par.p_min_frac * s, par.p_max_frac * s, -4 * s, 4 * s});
  // stator current limit
  prof.constraints.push_back(Disc{{}, v_pu * s});
  // field current limit: circle centered below the origin
  prof.constraints.push_back(
      Disc{{0.0, -v_pu * v_pu / x * s}, v_pu * par.e_max_pu / x * s});
  // load-angle stability chord
  const double d = par.stab_angle_deg * M_PI / 180.0;
  prof.constraints.push_back(
      HalfPlane{std::cos(d), -std::sin(d), std::sin(d) * v_pu * v_pu / x * s});
  if (par.via_converter)
    prof.constraints.push_back(Disc{{}, s});
  return prof;
}

SgAgent::SgAgent(std::string id, SgParams par)
    : id_(std::move(id)), par_(par) {
  target_ = {par_.p_min_frac * par_.rated_kva, 0.0};
}

Advertisement SgAgent::make_advertisement(std::int64_t t_us) {
  Advertisement ad;
  ad.agent_id = id_;
  ad.timestamp_us = t_us;
  if (disconnected_) {
    ad.profile = PQProfile::singleton({0, 0});
    ad.belief = BeliefIdeal{};
    ad.cost = CostConstant{};
    return ad;
  }
  ad.profile = sg_capability(par_, par_.v_max);  // largest possible set
  BeliefSgBand band;
  band.cap_small = sg_capability(par_, par_.v_min);
  band.cap_sweep.reserve(par_.sweep_samples);
  for (int i = 0; i < par_.sweep_samples; ++i) {
    double v = par_.v_min +
               (par_.v_max - par_.v_min) * i / (par_.sweep_samples - 1.0);
    band.cap_sweep.push_back(sg_capability(par_, v));
  }
  ad.belief = std::move(band);
  CostEfficiency cost;
  cost.a = par_.cost_a;
  for (size_t i = 0; i < par_.eta_p_frac.size(); ++i) {
    cost.p_samples.push_back(par_.eta_p_frac[i] * par_.rated_kva);
    cost.eta.push_back(par_.eta[i]);
  }
  ad.cost = std::move(cost);
  return ad;
}

void SgAgent::apply_request(const PQ& target_kw) {
  if (disconnected_) {
    target_ = {0, 0};
    return;
  }
  target_ = project_to_profile(sg_capability(par_, par_.v_max), target_kw);
}

void SgAgent::update_voltage(double v_pu) {
  v_flagged_ = v_pu < par_.v_min || v_pu > par_.v_max;
  v_now_ = std::clamp(v_pu, par_.v_min, par_.v_max);
}

PQ SgAgent::actual() const {
  if (disconnected_) return {0, 0};
  return project_to_profile(sg_capability(par_, v_now_), target_);
}

void SgAgent::disconnect() {
  disconnected_ = true;
  target_ = {0, 0};
}

}  // namespace commelec
