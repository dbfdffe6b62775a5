#pragma once

#include <functional>

#include "commelec/geometry.hpp"
#include "commelec/load_flow.hpp"

namespace commelec {

// Primary droop curve parameters. Slopes are negative (Table-style
// convention): f = f0 + m_f (P - P0), P = P0 + (f - f0)/m_f, so a surplus
// absorbed by the slack raises the frequency and high frequency backs
// generation off.
struct DroopParams {
  double f0_hz{50.0};
  double p0_frac{0.0};   // pu of the device rating at nominal frequency
  double m_f{-0.5};      // Hz per pu-of-rating
  double v0_pu{1.0};
  double q0_frac{0.0};
  double m_v{-0.04};     // pu voltage per pu-of-rating
  double rating_kva{0};
};

// Unclamped droop setpoint (kW/kVAr) at frequency f and local voltage v.
PQ droop_law(const DroopParams& par, double f_hz, double v_pu);

struct DroopDevice {
  std::string id;
  int bus{-1};
  DroopParams par;
  // droop target -> physically implemented setpoint (caps, capability)
  std::function<PQ(const PQ& target_kw, double v_pu)> clamp;
};

struct DroopResult {
  bool converged{false};
  double f_hz{50.0};
  ElectricalState state;
  std::vector<PQ> device_kw;
  std::vector<bool> clamped;
  PQ slack_kw;
};

// Algebraic (zero-inertia) equilibrium of the droop-controlled network:
// scalar bisection on the frequency with a voltage/reactive inner loop.
class DroopSolver {
 public:
  DroopSolver(const Network& net, DroopParams slack_par, double t_i_s = 50.0);

  // One control step: solves the fixed point, then (secondary mode only)
  // advances the frequency-error integrator by dt_s.
  DroopResult step(const std::vector<DroopDevice>& devices,
                   const std::vector<std::pair<int, PQ>>& fixed_kw,
                   bool secondary, double dt_s,
                   const ElectricalState* warm = nullptr);

  double integrator_hz() const { return integ_hz_; }
  void reset_integrator() { integ_hz_ = 0.0; }

 private:
  const Network* net_;
  LoadFlowSolver solver_;
  DroopParams slack_par_;
  double t_i_s_;
  double integ_hz_{0.0};

  std::optional<ElectricalState> solve_at(
      const std::vector<DroopDevice>& devices,
      const std::vector<std::pair<int, PQ>>& fixed_kw, double f_hz,
      const ElectricalState* warm, std::vector<PQ>* device_out,
      std::vector<bool>* clamped_out) const;
};

// Breaker-trip rule for storage: charging at full state of charge.
bool battery_trip(double soc, double p_injection_kw);

}  // namespace commelec
