#include "commelec/droop.hpp"

#include <cmath>

namespace commelec {

PQ droop_law(const DroopParams& par, double f_hz, double v_pu) {
  const double p = (par.p0_frac + (f_hz - par.f0_hz) / par.m_f) * par.rating_kva;
  const double q = (par.q0_frac + (v_pu - par.v0_pu) / par.m_v) * par.rating_kva;
  return {p, q};
}

bool battery_trip(double soc, double p_injection_kw) {
  return soc >= 1.0 - 1e-12 && p_injection_kw < -1e-9;
}

DroopSolver::DroopSolver(const Network& net, DroopParams slack_par,
                         double t_i_s)
    : net_(&net), solver_(net), slack_par_(slack_par), t_i_s_(t_i_s) {}

std::optional<ElectricalState> DroopSolver::solve_at(
    const std::vector<DroopDevice>& devices,
    const std::vector<std::pair<int, PQ>>& fixed_kw, double f_hz,
    const ElectricalState* warm, std::vector<PQ>* device_out,
    std::vector<bool>* clamped_out) const {
  const int n = net_->bus_count();
  const double to_pu = 1.0 / (net_->s_base_mva() * 1000.0);
  Eigen::VectorXd v_est = warm && warm->v_mag.size() == n
                              ? warm->v_mag
                              : Eigen::VectorXd::Constant(n, 1.0);
  std::optional<ElectricalState> st;
  std::vector<PQ> dev(devices.size());
  std::vector<bool> clamped(devices.size(), false);
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n), q = Eigen::VectorXd::Zero(n);
    for (const auto& [bus, kw] : fixed_kw) {
      p(bus) += kw.p * to_pu;
      q(bus) += kw.q * to_pu;
    }
    for (size_t i = 0; i < devices.size(); ++i) {
      const auto& d = devices[i];
      PQ want = droop_law(d.par, f_hz, v_est(d.bus));
      PQ got = d.clamp ? d.clamp(want, v_est(d.bus)) : want;
      clamped[i] = dist(want, got) > 1e-9;
      dev[i] = got;
      p(d.bus) += got.p * to_pu;
      q(d.bus) += got.q * to_pu;
    }
    LoadFlowOptions opt;
    opt.warm = st ? &*st : warm;
    st = solver_.solve(p, q, 1.0, opt);
    if (!st) return std::nullopt;
    if ((st->v_mag - v_est).cwiseAbs().maxCoeff() < 1e-9) break;
    v_est = st->v_mag;
  }
  if (device_out) *device_out = dev;
  if (clamped_out) *clamped_out = clamped;
  return st;
}

DroopResult DroopSolver::step(const std::vector<DroopDevice>& devices,
                              const std::vector<std::pair<int, PQ>>& fixed_kw,
                              bool secondary, double dt_s,
                              const ElectricalState* warm) {
  DroopResult res;
  const double s_kw = net_->s_base_mva() * 1000.0;
  const double offset = secondary ? integ_hz_ : 0.0;

  // g(f) = f0 + m_f * P_slack(f)/rating + offset - f, monotone decreasing
  auto g = [&](double f, DroopResult* keep) -> std::optional<double> {
    std::vector<PQ> dev;
    std::vector<bool> cl;
    auto st = solve_at(devices, fixed_kw, f, warm, &dev, &cl);
    if (!st) return std::nullopt;
    const double p_slack_frac = st->slack_p * s_kw / slack_par_.rating_kva;
    const double f_new =
        slack_par_.f0_hz + slack_par_.m_f * (p_slack_frac - slack_par_.p0_frac) +
        offset;
    if (keep) {
      keep->state = *st;
      keep->device_kw = std::move(dev);
      keep->clamped = std::move(cl);
      keep->slack_kw = {st->slack_p * s_kw, st->slack_q * s_kw};
    }
    return f_new - f;
  };

  double lo = 45.0, hi = 55.0;
  auto glo = g(lo, nullptr), ghi = g(hi, nullptr);
  if (!glo || !ghi || (*glo) * (*ghi) > 0) {
    res.converged = false;
    return res;
  }
  double f = 50.0;
  for (int it = 0; it < 60; ++it) {
    f = 0.5 * (lo + hi);
    auto gm = g(f, nullptr);
    if (!gm) {
      res.converged = false;
      return res;
    }
    if (std::abs(*gm) < 1e-7) break;
    if ((*glo) * (*gm) <= 0)
      hi = f;
    else {
      lo = f;
      glo = gm;
    }
    if (hi - lo < 1e-9) break;
  }
  auto final_g = g(f, &res);
  if (!final_g || std::abs(*final_g) > 1e-6) {
    res.converged = false;
    return res;
  }
  res.converged = true;
  res.f_hz = f;
  if (secondary)
    integ_hz_ += dt_s * (slack_par_.f0_hz - f) / t_i_s_;
  return res;
}

}  // namespace commelec
