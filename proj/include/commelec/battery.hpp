#pragma once

#include <cstdint>

#include "commelec/converter.hpp"
#include "commelec/message.hpp"

namespace commelec {

struct BatteryParams {
  double rated_kva{30};
  double rated_kwh{30};
  ConverterSpec conv{30, 0.0, false, 0.97};
  double soc_target{0.5};
  // pack electricals
  double v_nom{600};
  double v_min{510}, v_max{690};
  double i_max_a{60};   // discharge bound (positive)
  double i_min_a{-60};  // charge bound (negative)
  double r0_ohm{0.3};
  double r1_ohm{0.12}, tau1_s{5.0};
  double r2_ohm{0.09}, tau2_s{100.0};
  double emf_low_frac{0.95}, emf_high_frac{1.05};
  // advertised cost shape
  double cost_k{1.0}, cost_a{1.0}, cost_b{0.2}, cost_c{1.0};
};

// Two-time-constant cell model state (simulation ground truth).
struct TtcState {
  double soc{0.5};
  double v1{0}, v2{0};  // RC branch voltages
  double v_dc{0}, i_dc{0};
  bool tripped{false};
};

double battery_emf(const BatteryParams& par, double soc);
double battery_capacity_coulomb(const BatteryParams& par);

// Integrate one step at a fixed DC terminal power (kW, discharge positive).
TtcState ttc_step(const BatteryParams& par, TtcState st, double p_dc_kw,
                  double dt_s);
// Integrate one step at a fixed DC current (A, discharge positive).
TtcState ttc_step_current(const BatteryParams& par, TtcState st, double i_a,
                          double dt_s);

// The storage resource agent: estimates the internal resistance and EMF from
// DC measurements at consecutive request instants, derives DC power bounds,
// and advertises the resulting AC profile with an ideal belief.
class EssAgent {
 public:
  EssAgent(std::string id, BatteryParams par, double initial_soc);

  const std::string& id() const { return id_; }
  Advertisement make_advertisement(std::int64_t t_us);
  void apply_request(const PQ& target_kw);
  PQ actual() const;               // implemented AC injection (kW)
  void physics_step(double dt_s);  // integrates the TTC model
  void disconnect();

  // Slack mode: the converter runs in voltage control; the realized power is
  // dictated by the load flow and fed back here.
  void set_slack_actual(const PQ& kw);

  double soc() const { return ttc_.soc; }
  double stored_kwh() const { return ttc_.soc * par_.rated_kwh; }
  bool tripped() const { return ttc_.tripped; }
  const BatteryParams& params() const { return par_; }
  const PQProfile& advertised_profile() const { return profile_; }

  // DC power bounds from the agent-side R_t/E_t model (kW).
  struct DcBounds {
    double p_min, p_max;
  };
  DcBounds dc_bounds() const;
  static DcBounds dc_power_bounds(double e_t, double r_t,
                                  const BatteryParams& par);
  double rt() const { return r_t_; }
  double et() const { return e_t_; }

 private:
  std::string id_;
  BatteryParams par_;
  TtcState ttc_;
  PQ target_{};
  PQProfile profile_;
  double r_t_, e_t_;
  double last_v_{0}, last_i_{0};
  bool have_last_{false};
  bool disconnected_{false};

  void refresh_estimates();
  void rebuild_profile();
};

}  // namespace commelec
