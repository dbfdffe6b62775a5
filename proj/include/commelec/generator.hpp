#pragma once

#include <cstdint>

#include "commelec/converter.hpp"
#include "commelec/message.hpp"

namespace commelec {

struct SgParams {
  double rated_kva{250};
  double p_min_frac{0.2}, p_max_frac{1.0};
  double x_s_pu{3.07};       // synchronous reactance, machine base
  double x_t_pu{0.1};        // coupling transformer reactance
  double e_max_pu{3.6};      // max internal EMF from the excitation ratio
  double v_min{0.9}, v_max{1.1};
  double stab_angle_deg{70};
  int sweep_samples{17};
  bool via_converter{false};  // microturbine case: add the converter disc
  double conv_eta{1.0};
  double cost_a{1e-3};
  std::vector<double> eta_p_frac{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> eta{0.70, 0.82, 0.88, 0.91, 0.90};
};

// Capability set of the machine at terminal voltage v_pu: active-power
// limits, stator-current disc, field-current circle, and the load-angle
// stability chord. Units kW/kVAr.
PQProfile sg_capability(const SgParams& par, double v_pu);

class SgAgent {
 public:
  SgAgent(std::string id, SgParams par);

  const std::string& id() const { return id_; }
  Advertisement make_advertisement(std::int64_t t_us);
  void apply_request(const PQ& target_kw);
  // implemented setpoint: projection onto the capability at the measured
  // terminal voltage (clamped into the feasible band)
  void update_voltage(double v_pu);
  PQ actual() const;
  void disconnect();

  bool voltage_out_of_band() const { return v_flagged_; }
  const SgParams& params() const { return par_; }

 private:
  std::string id_;
  SgParams par_;
  PQ target_;
  double v_now_{1.0};
  bool v_flagged_{false};
  bool disconnected_{false};
};

}  // namespace commelec
