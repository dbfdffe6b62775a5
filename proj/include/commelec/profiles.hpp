#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace commelec {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Piecewise-linear time series (seconds, value). Queries before the first
// sample return the first value, after the last the last value is held.
struct TimeSeries {
  std::vector<double> t;
  std::vector<double> v;

  bool empty() const { return t.empty(); }
  double at(double time_s) const;
  static TimeSeries constant(double value);
};

// CSV with two columns "t,value"; '#' lines are comments. Throws ParseError
// with the offending line number.
TimeSeries load_csv_series(const std::string& path);

// Synthetic irradiance: a slowly varying clear-sky base modulated by a
// two-state random telegraph cloud process (exponential dwell times),
// transitions smoothed with a linear ramp. 50 ms sample step.
struct IrradianceParams {
  double duration_s{4000};
  double step_s{0.05};
  double base_w_m2{900};
  double base_swing{0.15};   // slow sinusoidal variation fraction
  double cloudy_factor{0.3}; // irradiance multiplier under cloud
  double mean_dwell_s{30};
  double ramp_s{2.0};
};
TimeSeries synth_irradiance(std::uint64_t seed, const IrradianceParams& par = {});

}  // namespace commelec
