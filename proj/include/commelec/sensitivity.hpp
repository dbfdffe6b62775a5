#pragma once

#include <stdexcept>

#include "commelec/load_flow.hpp"

namespace commelec {

class DegenerateStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// First-order response of the network state to per-bus injection changes.
// Columns are ordered [P of pq bus 0.., Q of pq bus 0..] following
// LoadFlowSolver::pq_buses(). Rows of k_v cover every bus (slack row zero);
// rows of k_i cover every branch (max-magnitude end).
struct SensitivityMatrices {
  Eigen::MatrixXd k_v;  // bus_count x 2m
  Eigen::MatrixXd k_i;  // branch_count x 2m
  Eigen::RowVectorXd k_slack_p;  // d(slack P injection)/d(inj)
  Eigen::RowVectorXd k_slack_q;
  std::vector<int> pq_buses;

  int col_p(int bus) const;
  int col_q(int bus) const;
};

// Analytic sensitivities from the final Newton Jacobian (one linear solve per
// injection column). Throws DegenerateStateError on a singular Jacobian.
SensitivityMatrices sensitivity_coefficients(const LoadFlowSolver& solver,
                                             const ElectricalState& state);

// Complex power flowing from end-bus `from_end` of branch `branch` into the
// branch (pu). With the branch oriented toward the slack of an internal GA's
// model, this is the subsystem's export at the PCC.
std::complex<double> branch_flow(const Network& net, const ElectricalState& st,
                                 int branch, bool at_from_end);

// Rows d(P_flow)/d(inj), d(Q_flow)/d(inj) for the branch flow above.
struct FlowSensitivity {
  Eigen::RowVectorXd dp;
  Eigen::RowVectorXd dq;
};
FlowSensitivity branch_flow_sensitivity(const LoadFlowSolver& solver,
                                        const ElectricalState& st, int branch,
                                        bool at_from_end);

}  // namespace commelec
