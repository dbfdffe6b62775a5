#include "commelec/uload.hpp"

namespace commelec {

UlAgent::UlAgent(std::string id, UlParams par, TimeSeries p_profile,
                 TimeSeries q_profile)
    : id_(std::move(id)), par_(par), p_profile_(std::move(p_profile)),
      q_profile_(std::move(q_profile)) {}

Advertisement UlAgent::make_advertisement(std::int64_t t_us, double t_s) {
  Advertisement ad;
  ad.agent_id = id_;
  ad.timestamp_us = t_us;
  if (disconnected_) {
    ad.profile = PQProfile::singleton({0, 0});
    ad.belief = BeliefIdeal{};
    ad.cost = CostConstant{};
    return ad;
  }
  // persistence forecast: the value measured now
  ad.profile = PQProfile::singleton(actual(t_s));
  ad.belief = BeliefUlArea{par_.rho_max_kva};
  ad.cost = CostConstant{};
  return ad;
}

PQ UlAgent::actual(double t_s) const {
  if (disconnected_) return {0, 0};
  return {p_profile_.at(t_s), q_profile_.at(t_s)};
}

void UlAgent::disconnect() { disconnected_ = true; }

}  // namespace commelec
