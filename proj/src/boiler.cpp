#include "commelec/boiler.hpp"

#include <algorithm>

namespace commelec {

BoilerAgent::BoilerAgent(std::string id, BoilerParams par, double initial_kwh,
                         double fc_lo, double fc_hi)
    : id_(std::move(id)), par_(par), energy_kwh_(initial_kwh), fc_lo_(fc_lo),
      fc_hi_(fc_hi) {}

Advertisement BoilerAgent::make_advertisement(std::int64_t t_us,
                                              double horizon_s) {
  Advertisement ad;
  ad.agent_id = id_;
  ad.timestamp_us = t_us;
  if (disconnected_) {
    ad.profile = PQProfile::singleton({0, 0});
    ad.belief = BeliefIdeal{};
    ad.cost = CostConstant{};
    return ad;
  }
  ad.profile = PQProfile::interval_p(-par_.p_max_kw, 0.0);

  // Worst-case stored energy over the horizon decides which hysteresis
  // outcomes the next implementation may produce.
  const double h = horizon_s / 3600.0;
  BeliefWbSet bf;
  bf.p_full = par_.p_max_kw;
  if (mode_ == BoilerMode::ForcedHeat) {
    bf.include_full = true;
    // release only if the margin is reachable within the horizon
    bf.include_request =
        energy_kwh_ + par_.p_max_kw * h >= par_.e_margin_min_kwh;
  } else if (mode_ == BoilerMode::ForcedOff) {
    bf.include_zero = true;
    bf.include_request = energy_kwh_ - fc_lo_ * h <= par_.e_margin_max_kwh;
  } else {
    bf.include_request = true;
    const double e_hi = energy_kwh_ + (par_.p_max_kw - fc_lo_) * h;
    const double e_lo = energy_kwh_ - fc_hi_ * h;
    if (e_hi > par_.e_max_kwh) bf.include_zero = true;
    if (e_lo < par_.e_min_kwh) bf.include_full = true;
  }
  ad.belief = bf;

  CostPolySoc cost;
  cost.k = par_.cost_k;
  cost.a = par_.cost_a;
  cost.b = par_.cost_b;
  cost.c = par_.cost_c;
  cost.dsoc = (par_.e_target_kwh - energy_kwh_) / par_.e_max_kwh;
  cost.center = -0.5 * (fc_lo_ + fc_hi_);  // forecasted demand
  cost.scale = par_.p_max_kw;
  ad.cost = cost;
  return ad;
}

void BoilerAgent::apply_request(const PQ& target_kw) {
  if (disconnected_) {
    target_p_ = 0;
    return;
  }
  target_p_ = std::clamp(target_kw.p, -par_.p_max_kw, 0.0);
}

PQ BoilerAgent::actual() const {
  if (disconnected_) return {0, 0};
  switch (mode_) {
    case BoilerMode::ForcedHeat:
      return {-par_.p_max_kw, 0.0};
    case BoilerMode::ForcedOff:
      return {0.0, 0.0};
    default:
      return {target_p_, 0.0};
  }
}

void BoilerAgent::physics_step(double p_out_kw, double dt_s) {
  if (disconnected_) return;
  const double p_in = -actual().p;  // heating power, >= 0
  energy_kwh_ += (p_in - p_out_kw) * dt_s / 3600.0;
  switch (mode_) {
    case BoilerMode::Normal:
      if (energy_kwh_ < par_.e_min_kwh)
        mode_ = BoilerMode::ForcedHeat;
      else if (energy_kwh_ > par_.e_max_kwh)
        mode_ = BoilerMode::ForcedOff;
      break;
    case BoilerMode::ForcedHeat:
      if (energy_kwh_ >= par_.e_margin_min_kwh) mode_ = BoilerMode::Normal;
      break;
    case BoilerMode::ForcedOff:
      if (energy_kwh_ <= par_.e_margin_max_kwh) mode_ = BoilerMode::Normal;
      break;
  }
}

void BoilerAgent::disconnect() {
  disconnected_ = true;
  target_p_ = 0;
}

}  // namespace commelec
