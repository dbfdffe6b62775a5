#include "commelec/sensitivity.hpp"

#include <cmath>

namespace commelec {

int SensitivityMatrices::col_p(int bus) const {
  for (size_t k = 0; k < pq_buses.size(); ++k)
    if (pq_buses[k] == bus) return static_cast<int>(k);
  return -1;
}

int SensitivityMatrices::col_q(int bus) const {
  int c = col_p(bus);
  return c < 0 ? -1 : c + static_cast<int>(pq_buses.size());
}

namespace {

// d|I_end| / d(ang_f, ang_t, mag_f, mag_t) for one branch end.
struct EndCurrentDeriv {
  double d_ang_f, d_ang_t, d_mag_f, d_mag_t;
};

EndCurrentDeriv end_current_derivative(const Network::Branch& br,
                                       const ElectricalState& st,
                                       bool at_from_end) {
  const int e = at_from_end ? br.from : br.to;
  const int o = at_from_end ? br.to : br.from;
  const std::complex<double> ve = std::polar(st.v_mag(e), st.v_ang(e));
  const std::complex<double> vo = std::polar(st.v_mag(o), st.v_ang(o));
  const std::complex<double> sh{0.0, br.b_shunt_half};
  const std::complex<double> c = (br.y_series + sh) * ve - br.y_series * vo;
  const double mag = std::abs(c);
  if (mag < 1e-12) return {0, 0, 0, 0};
  const std::complex<double> u = std::conj(c) / mag;
  const std::complex<double> j{0.0, 1.0};
  const std::complex<double> dc_dmag_e = (br.y_series + sh) * (ve / st.v_mag(e));
  const std::complex<double> dc_dang_e = (br.y_series + sh) * j * ve;
  const std::complex<double> dc_dmag_o = -br.y_series * (vo / st.v_mag(o));
  const std::complex<double> dc_dang_o = -br.y_series * j * vo;
  EndCurrentDeriv d;
  d.d_ang_f = (u * (at_from_end ? dc_dang_e : dc_dang_o)).real();
  d.d_ang_t = (u * (at_from_end ? dc_dang_o : dc_dang_e)).real();
  d.d_mag_f = (u * (at_from_end ? dc_dmag_e : dc_dmag_o)).real();
  d.d_mag_t = (u * (at_from_end ? dc_dmag_o : dc_dmag_e)).real();
  return d;
}

}  // namespace

SensitivityMatrices sensitivity_coefficients(const LoadFlowSolver& solver,
                                             const ElectricalState& st) {
  const Network& net = solver.network();
  const int n = net.bus_count();
  const int nb = net.branch_count();
  const auto& pq = solver.pq_buses();
  const int m = static_cast<int>(pq.size());

  SensitivityMatrices out;
  out.pq_buses = pq;
  out.k_v = Eigen::MatrixXd::Zero(n, 2 * m);
  out.k_i = Eigen::MatrixXd::Zero(nb, 2 * m);
  out.k_slack_p = Eigen::RowVectorXd::Zero(2 * m);
  out.k_slack_q = Eigen::RowVectorXd::Zero(2 * m);
  if (m == 0) return out;

  Eigen::MatrixXd jac = solver.jacobian(st);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
  if (!lu.isInvertible())
    throw DegenerateStateError("singular load-flow Jacobian");
  // Columns of inv map unit injection changes to state changes.
  Eigen::MatrixXd s = lu.inverse();

  for (int k = 0; k < m; ++k)
    out.k_v.row(pq[k]) = s.row(m + k);  // magnitude rows of the state

  for (int l = 0; l < nb; ++l) {
    const auto& br = net.branch(l);
    const bool from_end = st.i_line_from(l) >= st.i_line_to(l);
    EndCurrentDeriv d = end_current_derivative(br, st, from_end);
    Eigen::RowVectorXd dstate = Eigen::RowVectorXd::Zero(2 * m);
    const int rf_a = solver.state_row_ang(br.from);
    const int rt_a = solver.state_row_ang(br.to);
    const int rf_m = solver.state_row_mag(br.from);
    const int rt_m = solver.state_row_mag(br.to);
    if (rf_a >= 0) dstate(rf_a) += d.d_ang_f;
    if (rt_a >= 0) dstate(rt_a) += d.d_ang_t;
    if (rf_m >= 0) dstate(rf_m) += d.d_mag_f;
    if (rt_m >= 0) dstate(rt_m) += d.d_mag_t;
    out.k_i.row(l) = dstate * s;
  }

  // Slack injection responds through the network state.
  {
    const int slack = net.slack_bus();
    const auto& y = net.admittance();
    Eigen::RowVectorXd dp_dstate = Eigen::RowVectorXd::Zero(2 * m);
    Eigen::RowVectorXd dq_dstate = Eigen::RowVectorXd::Zero(2 * m);
    const double v0 = st.v_mag(slack);
    for (int j = 0; j < n; ++j) {
      if (j == slack) continue;
      const double g = y(slack, j).real(), b = y(slack, j).imag();
      if (g == 0 && b == 0) continue;
      const double th = st.v_ang(slack) - st.v_ang(j);
      const double ct = std::cos(th), ss = std::sin(th);
      const int ra = solver.state_row_ang(j), rm = solver.state_row_mag(j);
      if (ra >= 0) {
        dp_dstate(ra) += v0 * st.v_mag(j) * (g * ss - b * ct);
        dq_dstate(ra) += v0 * st.v_mag(j) * (-g * ct - b * ss);
      }
      if (rm >= 0) {
        dp_dstate(rm) += v0 * (g * ct + b * ss);
        dq_dstate(rm) += v0 * (g * ss - b * ct);
      }
    }
    out.k_slack_p = dp_dstate * s;
    out.k_slack_q = dq_dstate * s;
  }
  return out;
}

std::complex<double> branch_flow(const Network& net, const ElectricalState& st,
                                 int branch, bool at_from_end) {
  const auto& br = net.branch(branch);
  const int e = at_from_end ? br.from : br.to;
  const int o = at_from_end ? br.to : br.from;
  const std::complex<double> ve = std::polar(st.v_mag(e), st.v_ang(e));
  const std::complex<double> vo = std::polar(st.v_mag(o), st.v_ang(o));
  const std::complex<double> sh{0.0, br.b_shunt_half};
  const std::complex<double> i_e = (br.y_series + sh) * ve - br.y_series * vo;
  return ve * std::conj(i_e);
}

FlowSensitivity branch_flow_sensitivity(const LoadFlowSolver& solver,
                                        const ElectricalState& st, int branch,
                                        bool at_from_end) {
  const Network& net = solver.network();
  const auto& br = net.branch(branch);
  const auto& pq = solver.pq_buses();
  const int m = static_cast<int>(pq.size());
  const int e = at_from_end ? br.from : br.to;
  const int o = at_from_end ? br.to : br.from;
  const double v_e = st.v_mag(e), v_o = st.v_mag(o);
  const double th = st.v_ang(e) - st.v_ang(o);
  const std::complex<double> ej = std::polar(1.0, th);
  const std::complex<double> sh{0.0, br.b_shunt_half};
  const std::complex<double> ys = br.y_series;
  // S = conj(ys+sh) Ve^2 - conj(ys) Ve Vo e^{j(th)}
  const std::complex<double> ds_dve =
      2.0 * std::conj(ys + sh) * v_e - std::conj(ys) * v_o * ej;
  const std::complex<double> ds_dvo = -std::conj(ys) * v_e * ej;
  const std::complex<double> j1{0.0, 1.0};
  const std::complex<double> ds_dae = -std::conj(ys) * v_e * v_o * j1 * ej;
  const std::complex<double> ds_dao = std::conj(ys) * v_e * v_o * j1 * ej;

  Eigen::RowVectorXd dp_dstate = Eigen::RowVectorXd::Zero(2 * m);
  Eigen::RowVectorXd dq_dstate = Eigen::RowVectorXd::Zero(2 * m);
  auto put = [&](int bus, const std::complex<double>& dmag,
                 const std::complex<double>& dang) {
    const int ra = solver.state_row_ang(bus), rm = solver.state_row_mag(bus);
    if (ra >= 0) {
      dp_dstate(ra) += dang.real();
      dq_dstate(ra) += dang.imag();
    }
    if (rm >= 0) {
      dp_dstate(rm) += dmag.real();
      dq_dstate(rm) += dmag.imag();
    }
  };
  put(e, ds_dve, ds_dae);
  put(o, ds_dvo, ds_dao);

  Eigen::MatrixXd jac = solver.jacobian(st);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
  if (!lu.isInvertible())
    throw DegenerateStateError("singular load-flow Jacobian");
  Eigen::MatrixXd s = lu.inverse();
  FlowSensitivity out;
  out.dp = dp_dstate * s;
  out.dq = dq_dstate * s;
  return out;
}

}  // namespace commelec
