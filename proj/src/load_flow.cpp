#include "commelec/load_flow.hpp"

#include <cmath>

namespace commelec {

LoadFlowSolver::LoadFlowSolver(const Network& net) : net_(&net) {
  const auto& y = net.admittance();
  g_ = y.real();
  b_ = y.imag();
  const int n = net.bus_count();
  row_ang_.assign(n, -1);
  row_mag_.assign(n, -1);
  for (int i = 0; i < n; ++i)
    if (i != net.slack_bus()) pq_.push_back(i);
  const int m = static_cast<int>(pq_.size());
  for (int k = 0; k < m; ++k) {
    row_ang_[pq_[k]] = k;
    row_mag_[pq_[k]] = m + k;
  }
  adj_.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i && (g_(i, j) != 0.0 || b_(i, j) != 0.0))
        adj_[i].push_back({j, g_(i, j), b_(i, j)});
}

void LoadFlowSolver::computed_injections(const Eigen::VectorXd& v,
                                         const Eigen::VectorXd& a,
                                         Eigen::VectorXd& p,
                                         Eigen::VectorXd& q) const {
  const int n = net_->bus_count();
  p.setZero(n);
  q.setZero(n);
  // per-bus trig with angle-difference identities; the matrix is tree-sparse
  cos_.resize(n);
  sin_.resize(n);
  for (int i = 0; i < n; ++i) {
    cos_[i] = std::cos(a(i));
    sin_[i] = std::sin(a(i));
  }
  for (int i = 0; i < n; ++i) {
    double pi = g_(i, i) * v(i);
    double qi = -b_(i, i) * v(i);
    for (auto [j, gij, bij] : adj_[i]) {
      const double ct = cos_[i] * cos_[j] + sin_[i] * sin_[j];
      const double st = sin_[i] * cos_[j] - cos_[i] * sin_[j];
      pi += v(j) * (gij * ct + bij * st);
      qi += v(j) * (gij * st - bij * ct);
    }
    p(i) = v(i) * pi;
    q(i) = v(i) * qi;
  }
}

Eigen::MatrixXd LoadFlowSolver::jacobian(const ElectricalState& st) const {
  const int m = static_cast<int>(pq_.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  const Eigen::VectorXd& v = st.v_mag;
  const Eigen::VectorXd& a = st.v_ang;
  const int n = net_->bus_count();
  cos_.resize(n);
  sin_.resize(n);
  for (int i = 0; i < n; ++i) {
    cos_[i] = std::cos(a(i));
    sin_[i] = std::sin(a(i));
  }
  for (int r = 0; r < m; ++r) {
    const int i = pq_[r];
    {  // diagonal blocks
      jac(r, r) = -st.q_inj(i) - b_(i, i) * v(i) * v(i);
      jac(r, m + r) = st.p_inj(i) / v(i) + g_(i, i) * v(i);
      jac(m + r, r) = st.p_inj(i) - g_(i, i) * v(i) * v(i);
      jac(m + r, m + r) = st.q_inj(i) / v(i) - b_(i, i) * v(i);
    }
    for (auto [j, gij, bij] : adj_[i]) {
      const int cidx = row_ang_[j];
      if (cidx < 0) continue;  // slack column
      const double ct = cos_[i] * cos_[j] + sin_[i] * sin_[j];
      const double sa = sin_[i] * cos_[j] - cos_[i] * sin_[j];
      jac(r, cidx) = v(i) * v(j) * (gij * sa - bij * ct);
      jac(r, m + cidx) = v(i) * (gij * ct + bij * sa);
      jac(m + r, cidx) = -v(i) * v(j) * (gij * ct + bij * sa);
      jac(m + r, m + cidx) = v(i) * (gij * sa - bij * ct);
    }
  }
  return jac;
}

std::optional<ElectricalState> LoadFlowSolver::solve(
    const Eigen::VectorXd& p_spec, const Eigen::VectorXd& q_spec,
    double v_slack, const LoadFlowOptions& opt) const {
  const int n = net_->bus_count();
  const int m = static_cast<int>(pq_.size());
  const int slack = net_->slack_bus();

  ElectricalState st;
  if (opt.warm && opt.warm->v_mag.size() == n) {
    st.v_mag = opt.warm->v_mag;
    st.v_ang = opt.warm->v_ang;
  } else {
    st.v_mag = Eigen::VectorXd::Constant(n, v_slack);
    st.v_ang = Eigen::VectorXd::Zero(n);
  }
  st.v_mag(slack) = v_slack;
  st.v_ang(slack) = 0.0;

  if (m == 0) {  // single-bus grid
    st.p_inj.setZero(n);
    st.q_inj.setZero(n);
    fill_currents_and_losses(st);
    return st;
  }

  Eigen::VectorXd mism(2 * m);
  // chord iterations with the shared factorization first; a stall falls
  // through to full Newton below
  const int chord_cap = opt.chord ? 9 : 0;
  double prev_worst = std::numeric_limits<double>::infinity();
  for (int it = 0; it < chord_cap; ++it) {
    computed_injections(st.v_mag, st.v_ang, st.p_inj, st.q_inj);
    double worst = 0;
    for (int k = 0; k < m; ++k) {
      const int i = pq_[k];
      mism(k) = p_spec(i) - st.p_inj(i);
      mism(m + k) = q_spec(i) - st.q_inj(i);
      worst = std::max({worst, std::abs(mism(k)), std::abs(mism(m + k))});
    }
    st.iterations = it;
    st.max_mismatch = worst;
    if (worst < opt.tol) {
      st.slack_p = st.p_inj(slack);
      st.slack_q = st.q_inj(slack);
      fill_currents_and_losses(st);
      return st;
    }
    if (worst > 0.7 * prev_worst) break;  // weak contraction: use Newton
    prev_worst = worst;
    Eigen::VectorXd dx = opt.chord->lu.solve(mism);
    if (!dx.allFinite()) break;
    for (int k = 0; k < m; ++k) {
      st.v_ang(pq_[k]) += dx(k);
      st.v_mag(pq_[k]) += dx(m + k);
      if (st.v_mag(pq_[k]) < 0.05) return std::nullopt;
    }
  }
  for (int it = 0; it < opt.max_iter; ++it) {
    computed_injections(st.v_mag, st.v_ang, st.p_inj, st.q_inj);
    double worst = 0;
    for (int k = 0; k < m; ++k) {
      const int i = pq_[k];
      mism(k) = p_spec(i) - st.p_inj(i);
      mism(m + k) = q_spec(i) - st.q_inj(i);
      worst = std::max({worst, std::abs(mism(k)), std::abs(mism(m + k))});
    }
    st.iterations = it;
    st.max_mismatch = worst;
    if (worst < opt.tol) {
      st.slack_p = st.p_inj(slack);
      st.slack_q = st.q_inj(slack);
      fill_currents_and_losses(st);
      return st;
    }
    Eigen::MatrixXd jac = jacobian(st);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    Eigen::VectorXd dx = lu.solve(mism);
    if (!dx.allFinite()) return std::nullopt;
    for (int k = 0; k < m; ++k) {
      st.v_ang(pq_[k]) += dx(k);
      st.v_mag(pq_[k]) += dx(m + k);
      if (st.v_mag(pq_[k]) < 0.05) return std::nullopt;  // collapsed voltage
    }
  }
  return std::nullopt;
}

void LoadFlowSolver::fill_currents_and_losses(ElectricalState& st) const {
  const int nb = net_->branch_count();
  st.i_line.resize(nb);
  st.i_line_from.resize(nb);
  st.i_line_to.resize(nb);
  st.loss_p = 0;
  st.loss_q = 0;
  for (int k = 0; k < nb; ++k) {
    const auto& br = net_->branch(k);
    const std::complex<double> vf =
        std::polar(st.v_mag(br.from), st.v_ang(br.from));
    const std::complex<double> vt =
        std::polar(st.v_mag(br.to), st.v_ang(br.to));
    const std::complex<double> sh{0.0, br.b_shunt_half};
    const std::complex<double> i_f = br.y_series * (vf - vt) + sh * vf;
    const std::complex<double> i_t = br.y_series * (vt - vf) + sh * vt;
    st.i_line_from(k) = std::abs(i_f);
    st.i_line_to(k) = std::abs(i_t);
    st.i_line(k) = std::max(st.i_line_from(k), st.i_line_to(k));
    const std::complex<double> s_f = vf * std::conj(i_f);
    const std::complex<double> s_t = vt * std::conj(i_t);
    st.loss_p += s_f.real() + s_t.real();
    st.loss_q += s_f.imag() + s_t.imag();
  }
}

}  // namespace commelec
