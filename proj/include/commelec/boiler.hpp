#pragma once

#include <cstdint>

#include "commelec/message.hpp"

namespace commelec {

struct BoilerParams {
  double p_max_kw{50};
  double e_min_kwh{1}, e_margin_min_kwh{2};
  double e_margin_max_kwh{19}, e_max_kwh{20};
  double e_target_kwh{10};
  double cost_k{1.0}, cost_a{1.0}, cost_b{0.2}, cost_c{1.0};
};

enum class BoilerMode { Normal, ForcedHeat, ForcedOff };

// Water boiler: consumption-only resource with an internal hysteresis
// controller protecting the stored-energy band. Q == 0 throughout.
class BoilerAgent {
 public:
  BoilerAgent(std::string id, BoilerParams par, double initial_kwh,
              double p_out_forecast_lo = 0.0, double p_out_forecast_hi = 0.0);

  const std::string& id() const { return id_; }
  Advertisement make_advertisement(std::int64_t t_us, double horizon_s);
  void apply_request(const PQ& target_kw);  // clamped into [-p_max, 0]
  PQ actual() const;                        // mode-dependent grid injection
  void physics_step(double p_out_kw, double dt_s);
  void disconnect();
  void set_demand_forecast(double lo_kw, double hi_kw) {
    fc_lo_ = lo_kw;
    fc_hi_ = hi_kw;
  }

  double energy_kwh() const { return energy_kwh_; }
  BoilerMode mode() const { return mode_; }

 private:
  std::string id_;
  BoilerParams par_;
  double energy_kwh_;
  double fc_lo_, fc_hi_;  // demand forecast interval (kW, absolute values)
  BoilerMode mode_{BoilerMode::Normal};
  double target_p_{0};  // <= 0
  bool disconnected_{false};
};

}  // namespace commelec
