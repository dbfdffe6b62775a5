#include "commelec/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace commelec {

double TimeSeries::at(double time_s) const {
  if (t.empty()) return 0.0;
  if (time_s <= t.front()) return v.front();
  if (time_s >= t.back()) return v.back();
  auto it = std::upper_bound(t.begin(), t.end(), time_s);
  size_t i = static_cast<size_t>(it - t.begin());
  const double w = (time_s - t[i - 1]) / (t[i] - t[i - 1]);
  return v[i - 1] + w * (v[i] - v[i - 1]);
}

TimeSeries TimeSeries::constant(double value) {
  TimeSeries s;
  s.t = {0.0};
  s.v = {value};
  return s;
}

TimeSeries load_csv_series(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open profile: " + path);
  TimeSeries s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double t, v;
    if (!(ls >> t >> v))
      throw ParseError(path + ": malformed row at line " +
                       std::to_string(lineno));
    if (!s.t.empty() && t <= s.t.back())
      throw ParseError(path + ": non-increasing timestamp at line " +
                       std::to_string(lineno));
    s.t.push_back(t);
    s.v.push_back(v);
  }
  if (s.empty()) throw ParseError(path + ": empty profile");
  return s;
}

TimeSeries synth_irradiance(std::uint64_t seed, const IrradianceParams& par) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> dwell(1.0 / par.mean_dwell_s);
  TimeSeries s;
  const int n = static_cast<int>(par.duration_s / par.step_s) + 1;
  s.t.reserve(n);
  s.v.reserve(n);

  bool cloudy = false;
  double next_switch = dwell(rng);
  double ramp_from = 1.0;
  double ramp_start = -1e9;
  double level = 1.0;

  for (int i = 0; i < n; ++i) {
    const double t = i * par.step_s;
    while (t >= next_switch) {
      cloudy = !cloudy;
      ramp_from = level;
      ramp_start = next_switch;
      next_switch += dwell(rng);
    }
    const double target = cloudy ? par.cloudy_factor : 1.0;
    const double w = std::clamp((t - ramp_start) / par.ramp_s, 0.0, 1.0);
    level = ramp_from + (target - ramp_from) * w;
    const double base =
        par.base_w_m2 *
        (1.0 - par.base_swing * 0.5 *
                   (1.0 - std::cos(2.0 * M_PI * t / par.duration_s)));
    s.t.push_back(t);
    s.v.push_back(std::max(0.0, base * level));
  }
  return s;
}

}  // namespace commelec
