#include "commelec/grid_agent.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <limits>

namespace commelec {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double total_cost(const std::vector<PQ>& u_kw,
                  const std::vector<Advertisement>& ads,
                  const std::vector<double>& weights) {
  double c = 0;
  for (size_t i = 0; i < u_kw.size(); ++i) {
    if (!profile_contains(ads[i].profile, u_kw[i], 1e-6))
      throw DomainError("setpoint outside profile of " + ads[i].agent_id);
    c += weights[i] * eval_cost(ads[i].cost, u_kw[i].p, u_kw[i].q);
  }
  return c;
}

double penalty_j(const ElectricalState& state, int slack_bus, double beta,
                 const std::vector<double>& i_limit_pu) {
  double j = 0;
  for (int k = 0; k < state.v_mag.size(); ++k) {
    if (k == slack_bus) continue;
    const double dv = state.v_mag(k) - 1.0;
    const double denom = beta * beta - dv * dv;
    if (denom <= 0) return kInf;
    j += dv * dv / denom;
  }
  for (int l = 0; l < state.i_line.size(); ++l) {
    const double lim = i_limit_pu[l];
    if (!std::isfinite(lim)) continue;
    const double i = state.i_line(l);
    const double denom = lim * lim - i * i;
    if (denom <= 0) return kInf;
    j += i * i / denom;
  }
  return j;
}

double penalty_j0_internal(double w0, const PQ& request_pu, const PQ& pcc_pu) {
  const PQ d = pcc_pu - request_pu;
  return w0 * (d.p * d.p + d.q * d.q);
}

double penalty_j0_root(double w0, const CostDescriptor& slack_cost,
                       const PQ& slack_kw) {
  return w0 * eval_cost(slack_cost, slack_kw.p, slack_kw.q);
}

GridAgent::GridAgent(GAConfig cfg, const Network& net,
                     std::vector<FollowerRef> followers, int pcc_branch,
                     bool pcc_at_from_end)
    : cfg_(cfg), net_(&net), solver_(net), followers_(std::move(followers)),
      pcc_branch_(pcc_branch), pcc_at_from_(pcc_at_from_end) {}

void GridAgent::follower_injections(const std::vector<PQ>& u_kw,
                                    Eigen::VectorXd& p,
                                    Eigen::VectorXd& q) const {
  const double to_pu = 1.0 / (net_->s_base_mva() * 1000.0);
  p.setZero(net_->bus_count());
  q.setZero(net_->bus_count());
  for (size_t i = 0; i < followers_.size(); ++i) {
    p(followers_[i].bus) += u_kw[i].p * to_pu;
    q(followers_[i].bus) += u_kw[i].q * to_pu;
  }
}

std::optional<ElectricalState> GridAgent::solve(const std::vector<PQ>& u_kw,
                                                double v_slack,
                                                const ElectricalState* warm,
                                                double tol) const {
  Eigen::VectorXd p, q;
  follower_injections(u_kw, p, q);
  LoadFlowOptions opt;
  opt.warm = warm;
  opt.tol = tol;
  return solver_.solve(p, q, v_slack, opt);
}

PQ GridAgent::pcc_export_pu(const ElectricalState& st) const {
  if (pcc_branch_ < 0) {
    return {-st.slack_p, -st.slack_q};
  }
  auto s = branch_flow(*net_, st, pcc_branch_, pcc_at_from_);
  return {s.real(), s.imag()};
}

PQ GridAgent::slack_injection_kw(const ElectricalState& st) const {
  const double s = net_->s_base_mva() * 1000.0;
  return {st.slack_p * s, st.slack_q * s};
}

std::vector<PQ> GridAgent::clamp_to_profiles(
    const std::vector<PQ>& u_kw, const std::vector<Advertisement>& ads) const {
  std::vector<PQ> out(u_kw.size());
  for (size_t i = 0; i < u_kw.size(); ++i)
    out[i] = project_to_profile(ads[i].profile, u_kw[i]);
  return out;
}

Eigen::VectorXd GridAgent::objective_gradient(
    const GARoundInput& in, const SensitivityMatrices& sens) const {
  const int n = static_cast<int>(followers_.size());
  const double kw_per_pu = net_->s_base_mva() * 1000.0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * n);

  const double j_now = penalty_j(in.state, net_->slack_bus(), cfg_.beta,
                                 in.i_limit_pu);
  if (!std::isfinite(j_now))
    throw DomainError("cannot differentiate: measured state infeasible");

  // per-follower column indices into the sensitivity matrices
  std::vector<int> col_p(n), col_q(n);
  for (int i = 0; i < n; ++i) {
    col_p[i] = sens.col_p(followers_[i].bus);
    col_q[i] = sens.col_q(followers_[i].bus);
  }

  // advertised costs, evaluated at x_hat clamped into the profiles
  for (int i = 0; i < n; ++i) {
    const PQ x = project_to_profile(in.ads[i].profile, in.x_hat_kw[i]);
    PQ gc = cost_gradient(in.ads[i].cost, x.p, x.q);
    g(2 * i) += followers_[i].weight * gc.p * kw_per_pu;
    g(2 * i + 1) += followers_[i].weight * gc.q * kw_per_pu;
  }

  // voltage barrier terms
  const double b2 = cfg_.beta * cfg_.beta;
  for (int k = 0; k < net_->bus_count(); ++k) {
    if (k == net_->slack_bus()) continue;
    const double dv = in.state.v_mag(k) - 1.0;
    const double denom = b2 - dv * dv;
    const double coef = 2.0 * b2 * dv / (denom * denom);
    if (coef == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      if (col_p[i] < 0) continue;
      g(2 * i) += coef * sens.k_v(k, col_p[i]);
      g(2 * i + 1) += coef * sens.k_v(k, col_q[i]);
    }
  }

  // current barrier terms
  for (int l = 0; l < net_->branch_count(); ++l) {
    const double lim = in.i_limit_pu[l];
    if (!std::isfinite(lim)) continue;
    const double i_mag = in.state.i_line(l);
    const double denom = lim * lim - i_mag * i_mag;
    const double coef = 2.0 * lim * lim * i_mag / (denom * denom);
    if (coef == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      if (col_p[i] < 0) continue;
      g(2 * i) += coef * sens.k_i(l, col_p[i]);
      g(2 * i + 1) += coef * sens.k_i(l, col_q[i]);
    }
  }

  // PCC / slack term
  if (cfg_.role == GaRole::Internal) {
    if (in.leader_request_kw) {
      const PQ req_pu = *in.leader_request_kw * (1.0 / kw_per_pu);
      const PQ pcc = pcc_export_pu(in.state);
      FlowSensitivity fs =
          branch_flow_sensitivity(solver_, in.state, pcc_branch_, pcc_at_from_);
      const double cp = 2.0 * cfg_.w0 * (pcc.p - req_pu.p);
      const double cq = 2.0 * cfg_.w0 * (pcc.q - req_pu.q);
      for (int i = 0; i < n; ++i) {
        if (col_p[i] < 0) continue;
        g(2 * i) += cp * fs.dp(col_p[i]) + cq * fs.dq(col_p[i]);
        g(2 * i + 1) += cp * fs.dp(col_q[i]) + cq * fs.dq(col_q[i]);
      }
    }
  } else if (in.slack_ad) {
    const PQ sl_kw = slack_injection_kw(in.state);
    PQ gc = cost_gradient(in.slack_ad->cost, sl_kw.p, sl_kw.q);
    const double cp = cfg_.w0 * gc.p * kw_per_pu;
    const double cq = cfg_.w0 * gc.q * kw_per_pu;
    for (int i = 0; i < n; ++i) {
      if (col_p[i] < 0) continue;
      g(2 * i) += cp * sens.k_slack_p(col_p[i]) + cq * sens.k_slack_q(col_p[i]);
      g(2 * i + 1) += cp * sens.k_slack_p(col_q[i]) + cq * sens.k_slack_q(col_q[i]);
    }
  }
  return g;
}

double GridAgent::violation_distance(const std::optional<ElectricalState>& st,
                                     const GARoundInput& in) const {
  if (!st) return cfg_.diverged_violation;
  double d = 0;
  for (int k = 0; k < net_->bus_count(); ++k) {
    if (k == net_->slack_bus()) continue;
    const double over = std::abs(st->v_mag(k) - 1.0) - cfg_.beta;
    if (over > 0) d = std::max(d, over / cfg_.beta);
  }
  for (int l = 0; l < net_->branch_count(); ++l) {
    const double lim = in.i_limit_pu[l];
    if (!std::isfinite(lim)) continue;
    const double over = st->i_line(l) - lim;
    if (over > 0) d = std::max(d, over / lim);
  }
  if (cfg_.role == GaRole::Root && in.slack_ad) {
    const PQ sl = slack_injection_kw(*st);
    if (!profile_contains(in.slack_ad->profile, sl, 1e-9)) {
      const PQ proj = project_to_profile(in.slack_ad->profile, sl);
      Box bb = profile_bbox(in.slack_ad->profile, 1e6);
      const double scale = std::max(1.0, 0.5 * bb.diameter());
      d = std::max(d, dist(sl, proj) / scale);
    }
  }
  return d;
}

std::vector<Box> GridAgent::follower_rects(
    const std::vector<PQ>& u_kw, const std::vector<Advertisement>& ads) const {
  std::vector<Box> rects(u_kw.size());
  for (size_t i = 0; i < u_kw.size(); ++i)
    rects[i] = belief_rectangle(ads[i].belief, u_kw[i]);
  return rects;
}

std::vector<std::pair<int, Box>> GridAgent::bus_boxes(
    const std::vector<Box>& follower_rects_kw) const {
  // The load flow depends only on bus totals, so the Minkowski sum of
  // same-bus rectangles is an exact reduction.
  std::map<int, Box> bus_box;
  for (size_t i = 0; i < follower_rects_kw.size(); ++i) {
    const Box& r = follower_rects_kw[i];
    auto [it, fresh] = bus_box.try_emplace(followers_[i].bus, r);
    if (!fresh) {
      Box& b = it->second;
      b.p_lo += r.p_lo;
      b.p_hi += r.p_hi;
      b.q_lo += r.q_lo;
      b.q_hi += r.q_hi;
    }
  }
  return {bus_box.begin(), bus_box.end()};
}

AdmissibilityReport GridAgent::admissibility_over_boxes(
    const std::vector<std::pair<int, Box>>& boxes, const GARoundInput& in,
    bool verdict_only, double abort_above) const {
  AdmissibilityReport rep;
  std::vector<int> buses;
  std::vector<std::vector<PQ>> verts;
  long total = 1;
  for (auto& [bus, box] : boxes) {
    auto vs = box.vertices(cfg_.rect_eps_kw);
    total *= static_cast<long>(vs.size());
    if (total > cfg_.vertex_cap)
      return admissibility_probe_directed(boxes, in);  // coarser vertex set
    buses.push_back(bus);
    verts.push_back(std::move(vs));
  }

  const double to_pu = 1.0 / (net_->s_base_mva() * 1000.0);
  std::vector<size_t> idx(buses.size(), 0);
  const int m = static_cast<int>(buses.size());
  rep.combinations = static_cast<int>(total);
  ChordBasis basis = solver_.make_chord_basis(in.state);
  LoadFlowOptions opt;
  opt.warm = &in.state;
  opt.chord = &basis;
  const int nb = net_->bus_count();
  while (true) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(nb);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(nb);
    for (int b = 0; b < m; ++b) {
      const PQ& v = verts[b][idx[b]];
      p(buses[b]) = v.p * to_pu;
      q(buses[b]) = v.q * to_pu;
    }
    auto st = solver_.solve(p, q, in.v_slack, opt);
    ++rep.load_flows;
    rep.delta_max = std::max(rep.delta_max, violation_distance(st, in));
    if (verdict_only && rep.delta_max > 0) return rep;
    if (rep.delta_max > abort_above) return rep;  // cannot be the minimum
    int b = 0;
    for (; b < m; ++b) {
      if (++idx[b] < verts[b].size()) break;
      idx[b] = 0;
    }
    if (b == m) break;
  }
  return rep;
}

AdmissibilityReport GridAgent::admissibility_probe_directed(
    const std::vector<std::pair<int, Box>>& boxes,
    const GARoundInput& in) const {
  AdmissibilityReport rep;
  const int m = static_cast<int>(boxes.size());
  const double to_pu = 1.0 / (net_->s_base_mva() * 1000.0);
  auto sens = sensitivity_coefficients(solver_, in.state);

  // candidate vertices encoded as one choice byte per bus:
  // bit0 = P at hi, bit1 = Q at hi
  std::vector<std::vector<std::uint8_t>> cands;
  auto add = [&](const std::vector<std::uint8_t>& c) {
    for (const auto& e : cands)
      if (e == c) return;
    cands.push_back(c);
  };
  add(std::vector<std::uint8_t>(m, 0));
  add(std::vector<std::uint8_t>(m, 3));
  add(std::vector<std::uint8_t>(m, 1));
  add(std::vector<std::uint8_t>(m, 2));
  for (int l = 0; l < net_->branch_count(); ++l) {
    if (!std::isfinite(in.i_limit_pu[l])) continue;
    std::vector<std::uint8_t> c(m, 0);
    for (int b = 0; b < m; ++b) {
      const int cp = sens.col_p(boxes[b].first);
      const int cq = sens.col_q(boxes[b].first);
      if (cp < 0) continue;
      if (sens.k_i(l, cp) > 0) c[b] |= 1;
      if (sens.k_i(l, cq) > 0) c[b] |= 2;
    }
    add(c);
    for (auto& e : c) e ^= 3;  // opposite extreme of the same line
    add(c);
  }

  rep.combinations = static_cast<int>(cands.size());
  ChordBasis basis = solver_.make_chord_basis(in.state);
  LoadFlowOptions opt;
  opt.warm = &in.state;
  opt.chord = &basis;
  const int nb = net_->bus_count();
  for (const auto& c : cands) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(nb);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(nb);
    for (int b = 0; b < m; ++b) {
      const Box& box = boxes[b].second;
      p(boxes[b].first) = ((c[b] & 1) ? box.p_hi : box.p_lo) * to_pu;
      q(boxes[b].first) = ((c[b] & 2) ? box.q_hi : box.q_lo) * to_pu;
    }
    auto st = solver_.solve(p, q, in.v_slack, opt);
    ++rep.load_flows;
    rep.delta_max = std::max(rep.delta_max, violation_distance(st, in));
  }
  return rep;
}

AdmissibilityReport GridAgent::admissibility_test(const std::vector<PQ>& u_kw,
                                                  const GARoundInput& in,
                                                  bool verdict_only) const {
  return admissibility_over_boxes(bus_boxes(follower_rects(u_kw, in.ads)), in,
                                  verdict_only);
}

std::vector<PQ> GridAgent::project_to_admissible(std::vector<PQ> u_kw,
                                                 const GARoundInput& in,
                                                 GADiagnostics* diag) const {
  u_kw = clamp_to_profiles(u_kw, in.ads);
  if (in.certified_hull) {
    // covered by an already-certified rectangle hull: admissible by the
    // vertex argument, no fresh load flows needed
    auto rects = follower_rects(u_kw, in.ads);
    bool covered = rects.size() == in.certified_hull->size();
    for (size_t i = 0; i < rects.size() && covered; ++i) {
      const Box& h = (*in.certified_hull)[i];
      covered = rects[i].p_lo >= h.p_lo - 1e-9 &&
                rects[i].p_hi <= h.p_hi + 1e-9 &&
                rects[i].q_lo >= h.q_lo - 1e-9 &&
                rects[i].q_hi <= h.q_hi + 1e-9;
    }
    if (covered) return u_kw;
  }
  auto pre = admissibility_test(u_kw, in, /*verdict_only=*/true);
  if (diag) {
    diag->delta_before = pre.delta_max;
    diag->load_flows += pre.load_flows;
  }
  if (pre.delta_max == 0.0) return u_kw;  // idempotent on admissible inputs

  const int n = static_cast<int>(followers_.size());
  const double du_kw =
      cfg_.alpha * cfg_.g_max / 4.0 * net_->s_base_mva() * 1000.0;
  std::mt19937_64 rng(in.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double best_delta = pre.delta_max;
  for (int it = 0; it < cfg_.proj_iter_cap; ++it) {
    if (diag) diag->proj_iterations = it + 1;
    std::vector<PQ> best_candidate;
    double round_best = std::numeric_limits<double>::infinity();
    int lf_used = diag ? diag->load_flows : 0;
    for (int d = 0; d < cfg_.n_dirs; ++d) {
      Eigen::VectorXd dir(2 * n);
      for (int k = 0; k < 2 * n; ++k) dir(k) = gauss(rng);
      const double nn = dir.norm();
      if (nn < 1e-12) continue;
      dir *= du_kw / nn;
      std::vector<PQ> cand(n);
      for (int i = 0; i < n; ++i)
        cand[i] = PQ{u_kw[i].p + dir(2 * i), u_kw[i].q + dir(2 * i + 1)};
      cand = clamp_to_profiles(cand, in.ads);
      // candidates that already exceed the best violation abort early
      auto rep = admissibility_over_boxes(
          bus_boxes(follower_rects(cand, in.ads)), in, false, round_best);
      lf_used += rep.load_flows;
      if (diag) diag->load_flows += rep.load_flows;
      if (rep.delta_max < round_best) {
        round_best = rep.delta_max;
        best_candidate = std::move(cand);
      }
    }
    if (best_candidate.empty()) break;
    u_kw = std::move(best_candidate);
    best_delta = round_best;
    if (best_delta == 0.0) return u_kw;
    if (lf_used > cfg_.proj_lf_budget) break;  // budget spent: fall back
  }

  // Iteration cap: fall back to the last implemented state.
  if (diag) diag->fallback = true;
  auto fb = clamp_to_profiles(in.x_hat_kw, in.ads);
  auto rep = admissibility_test(fb, in, /*verdict_only=*/true);
  if (diag) diag->load_flows += rep.load_flows;
  if (rep.delta_max == 0.0) return fb;
  return best_delta < rep.delta_max ? u_kw : fb;
}

double GridAgent::linearized_objective(const std::vector<PQ>& u_kw,
                                       const GARoundInput& in,
                                       const SensitivityMatrices& sens) const {
  const int n = static_cast<int>(followers_.size());
  const double kw_per_pu = net_->s_base_mva() * 1000.0;
  // delta injection per sensitivity column
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(sens.k_v.cols());
  for (int i = 0; i < n; ++i) {
    const int cp = sens.col_p(followers_[i].bus);
    const int cq = sens.col_q(followers_[i].bus);
    if (cp < 0) continue;
    dx(cp) += (u_kw[i].p - in.x_hat_kw[i].p) / kw_per_pu;
    dx(cq) += (u_kw[i].q - in.x_hat_kw[i].q) / kw_per_pu;
  }
  // linearized voltages and currents
  ElectricalState lin = in.state;
  lin.v_mag += sens.k_v * dx;
  lin.i_line += sens.k_i * dx;
  double j = penalty_j(lin, net_->slack_bus(), cfg_.beta, in.i_limit_pu);

  double c = 0;
  for (int i = 0; i < n; ++i) {
    const PQ u = project_to_profile(in.ads[i].profile, u_kw[i]);
    c += followers_[i].weight * eval_cost(in.ads[i].cost, u.p, u.q);
  }

  double j0 = 0;
  if (cfg_.role == GaRole::Internal) {
    if (in.leader_request_kw) {
      PQ pcc = pcc_export_pu(in.state);
      FlowSensitivity fs =
          branch_flow_sensitivity(solver_, in.state, pcc_branch_, pcc_at_from_);
      pcc.p += (fs.dp * dx)(0);
      pcc.q += (fs.dq * dx)(0);
      j0 = penalty_j0_internal(cfg_.w0, *in.leader_request_kw * (1.0 / kw_per_pu),
                               pcc);
    }
  } else if (in.slack_ad) {
    PQ sl = slack_injection_kw(in.state);
    sl.p += (sens.k_slack_p * dx)(0) * kw_per_pu;
    sl.q += (sens.k_slack_q * dx)(0) * kw_per_pu;
    j0 = penalty_j0_root(cfg_.w0, in.slack_ad->cost, sl);
  }
  return c + j0 + j;
}

GARoundOutput GridAgent::compute_setpoints(const GARoundInput& in) const {
  GARoundOutput out;
  const int n = static_cast<int>(followers_.size());
  const double kw_per_pu = net_->s_base_mva() * 1000.0;
  GADiagnostics& diag = out.diag;

  std::vector<PQ> target(n);
  if (cfg_.strict_tracking && cfg_.role == GaRole::Internal &&
      in.leader_request_kw) {
    // Ideal-composition mode: meet the leader request exactly (losses and
    // own costs ignored), distributing the PCC delta uniformly.
    PQ pcc = pcc_export_pu(in.state) * kw_per_pu;
    PQ delta = (*in.leader_request_kw - pcc) * (1.0 / n);
    for (int i = 0; i < n; ++i) target[i] = in.x_hat_kw[i] + delta;
  } else {
    Eigen::VectorXd step = Eigen::VectorXd::Zero(2 * n);
    const double j_now =
        penalty_j(in.state, net_->slack_bus(), cfg_.beta, in.i_limit_pu);
    diag.j = j_now;
    if (std::isfinite(j_now)) {
      auto sens = sensitivity_coefficients(solver_, in.state);
      Eigen::VectorXd g = objective_gradient(in, sens);
      diag.grad_norm = g.norm();
      step = cfg_.alpha * g;
      const double sn = step.norm();
      if (sn > cfg_.step_clip_pu) step *= cfg_.step_clip_pu / sn;
    }
    for (int i = 0; i < n; ++i) {
      const PQ x = project_to_profile(in.ads[i].profile, in.x_hat_kw[i]);
      target[i] = PQ{x.p - step(2 * i) * kw_per_pu,
                     x.q - step(2 * i + 1) * kw_per_pu};
    }
  }

  out.u_kw = project_to_admissible(std::move(target), in, &diag);

  try {
    diag.cost_c = total_cost(out.u_kw, in.ads, [&] {
      std::vector<double> w(n);
      for (int i = 0; i < n; ++i) w[i] = followers_[i].weight;
      return w;
    }());
  } catch (const DomainError&) {
    diag.cost_c = std::numeric_limits<double>::quiet_NaN();
  }
  if (cfg_.role == GaRole::Internal && in.leader_request_kw) {
    diag.j0 = penalty_j0_internal(cfg_.w0,
                                  *in.leader_request_kw * (1.0 / kw_per_pu),
                                  pcc_export_pu(in.state));
  } else if (cfg_.role == GaRole::Root && in.slack_ad) {
    diag.j0 =
        penalty_j0_root(cfg_.w0, in.slack_ad->cost, slack_injection_kw(in.state));
  }
  return out;
}

}  // namespace commelec
