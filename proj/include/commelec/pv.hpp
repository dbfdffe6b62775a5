#pragma once

#include <cstdint>
#include <deque>

#include "commelec/converter.hpp"
#include "commelec/message.hpp"

namespace commelec {

struct PvParams {
  double rated_kw{10};
  ConverterSpec conv{10, 0.8, true, 1.0};
  double cost_a{0.05};  // reward per kW produced
  double cost_b{1e-3};  // reactive-power penalty
  double drop_frac{0.20};
  double drop_window_s{60.0};
};

// Photovoltaic resource agent. The available power cap follows irradiance
// linearly (1000 W/m^2 = rated). The advertised profile caps P at the
// persistence forecast; the belief is the drop segment sized from the
// forecast-error tracker.
class PvAgent {
 public:
  PvAgent(std::string id, PvParams par);

  const std::string& id() const { return id_; }
  void update_irradiance(double w_m2, double t_s);
  Advertisement make_advertisement(std::int64_t t_us);
  void apply_request(const PQ& target_kw);
  PQ actual() const;  // tracks the request under the irradiance cap
  void disconnect();
  bool disconnected() const { return disconnected_; }

  double cap_kw() const { return cap_kw_; }
  const PvParams& params() const { return par_; }
  double drop_estimate_kw() const;
  const PQProfile& advertised_profile() const { return profile_; }

 private:
  std::string id_;
  PvParams par_;
  double cap_kw_{0};
  PQ target_{};
  PQProfile profile_;
  std::deque<std::pair<double, double>> cap_history_;  // (t, cap)
  bool disconnected_{false};

  void rebuild_profile();
};

}  // namespace commelec
