#include "commelec/pv.hpp"

#include <algorithm>
#include <cmath>

namespace commelec {

PvAgent::PvAgent(std::string id, PvParams par)
    : id_(std::move(id)), par_(par) {
  rebuild_profile();
}

void PvAgent::update_irradiance(double w_m2, double t_s) {
  cap_kw_ = par_.rated_kw * std::clamp(w_m2 / 1000.0, 0.0, 1.0);
  cap_history_.emplace_back(t_s, cap_kw_);
  while (!cap_history_.empty() &&
         cap_history_.front().first < t_s - par_.drop_window_s)
    cap_history_.pop_front();
}

double PvAgent::drop_estimate_kw() const {
  // worst observed drop over any ~1 s span in the trailing window
  double worst = 0.0;
  for (size_t i = 0; i < cap_history_.size(); ++i) {
    double t0 = cap_history_[i].first;
    double hi = cap_history_[i].second;
    for (size_t j = i + 1;
         j < cap_history_.size() && cap_history_[j].first <= t0 + 1.0; ++j)
      worst = std::max(worst, hi - cap_history_[j].second);
  }
  return std::max(worst, par_.drop_frac * cap_kw_);
}

void PvAgent::rebuild_profile() {
  profile_.constraints.clear();
  if (disconnected_) {
    profile_ = PQProfile::singleton({0, 0});
    return;
  }
  for (auto& c : converter_region(par_.conv)) profile_.constraints.push_back(c);
  // persistence forecast of the sustainable production
  profile_.constraints.push_back(HalfPlane{1.0, 0.0, cap_kw_});
}

Advertisement PvAgent::make_advertisement(std::int64_t t_us) {
  rebuild_profile();
  Advertisement ad;
  ad.agent_id = id_;
  ad.timestamp_us = t_us;
  ad.profile = profile_;
  if (disconnected_) {
    ad.belief = BeliefIdeal{};
    ad.cost = CostConstant{};
    return ad;
  }
  ad.belief = BeliefPvDrop{drop_estimate_kw(), par_.conv.cos_min};
  ad.cost = CostLinearPQuadQ{par_.cost_a, par_.cost_b};
  return ad;
}

void PvAgent::apply_request(const PQ& target_kw) {
  if (disconnected_) {
    target_ = {0, 0};
    return;
  }
  rebuild_profile();  // the cap may have moved since the last advertisement
  target_ = project_to_profile(profile_, target_kw);
}

PQ PvAgent::actual() const {
  if (disconnected_) return {0, 0};
  const double p = std::min(target_.p, cap_kw_);
  double q = target_.q;
  if (par_.conv.cos_min > 0) {
    const double t = std::sqrt(1.0 - par_.conv.cos_min * par_.conv.cos_min) /
                     par_.conv.cos_min;
    q = std::clamp(q, -t * p, t * p);
  }
  const double s = par_.conv.s_rated_kva;
  const double q_cap = std::sqrt(std::max(0.0, s * s - p * p));
  q = std::clamp(q, -q_cap, q_cap);
  return {p, q};
}

void PvAgent::disconnect() {
  disconnected_ = true;
  target_ = {0, 0};
}

}  // namespace commelec
