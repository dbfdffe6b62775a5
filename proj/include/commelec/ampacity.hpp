#pragma once

#include <algorithm>
#include <cmath>

namespace commelec {

// Thermal overload budget of a conductor. While the current stays at or
// below the static ampacity the accumulator resets (memoryless recovery) and
// the line may carry up to headroom x static. During an overload the Joule
// integral accumulates; the effective limit shrinks so that the projected
// energy over the protection horizon stays below the specific energy, and
// falls back to the static rating once the budget is spent.
struct DynamicAmpacity {
  double joule_a2s{0};
  double limit_a{0};
};

struct AmpacityParams {
  double headroom{1.3};
  double protect_horizon_s{5.0};
};

inline DynamicAmpacity update_dynamic_ampacity(double static_a,
                                               double specific_energy_a2s,
                                               DynamicAmpacity st, double i_a,
                                               double dt_s,
                                               const AmpacityParams& par = {}) {
  if (i_a <= static_a) {
    st.joule_a2s = 0.0;
    st.limit_a = par.headroom * static_a;
    return st;
  }
  st.joule_a2s += i_a * i_a * dt_s;
  const double remaining = specific_energy_a2s - st.joule_a2s;
  if (remaining <= 0.0) {
    st.limit_a = static_a;
    return st;
  }
  const double sustainable = std::sqrt(remaining / par.protect_horizon_s);
  st.limit_a = std::clamp(sustainable, static_a, par.headroom * static_a);
  return st;
}

}  // namespace commelec
