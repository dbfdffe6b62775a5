#pragma once

#include <optional>

#include <Eigen/Dense>

#include "commelec/grid.hpp"

namespace commelec {

// Converged AC state. Vectors are sized by bus count, currents by branch
// count; everything in per-unit.
struct ElectricalState {
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;  // rad, slack angle = 0
  Eigen::VectorXd p_inj;  // includes computed slack injection
  Eigen::VectorXd q_inj;
  Eigen::VectorXd i_line;       // max of the two line-end magnitudes
  Eigen::VectorXd i_line_from;  // from-end magnitude
  Eigen::VectorXd i_line_to;
  double slack_p{0}, slack_q{0};
  double loss_p{0}, loss_q{0};
  int iterations{0};
  double max_mismatch{0};
};

// Shared Jacobian factorization for chord iterations across many nearby
// solves (vertex sweeps). Built at a base state; solves fall back to full
// Newton if the chord iteration stalls.
struct ChordBasis {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
};

struct LoadFlowOptions {
  double tol{1e-8};
  int max_iter{40};
  const ElectricalState* warm{nullptr};  // initial guess; flat start if null
  const ChordBasis* chord{nullptr};
};

class LoadFlowSolver {
 public:
  explicit LoadFlowSolver(const Network& net);

  // p_spec/q_spec are per-bus injections (pu); the slack entries are ignored.
  // Returns nullopt on non-convergence (infeasible flow).
  std::optional<ElectricalState> solve(const Eigen::VectorXd& p_spec,
                                       const Eigen::VectorXd& q_spec,
                                       double v_slack = 1.0,
                                       const LoadFlowOptions& opt = {}) const;

  const Network& network() const { return *net_; }
  const std::vector<int>& pq_buses() const { return pq_; }
  int state_row_ang(int bus) const { return row_ang_[bus]; }   // -1 for slack
  int state_row_mag(int bus) const { return row_mag_[bus]; }

  // Power-flow Jacobian at a state (2m x 2m, m = pq count), ordering
  // [d_ang(pq); d_mag(pq)] -> [dP(pq); dQ(pq)].
  Eigen::MatrixXd jacobian(const ElectricalState& st) const;
  ChordBasis make_chord_basis(const ElectricalState& st) const {
    return ChordBasis{Eigen::PartialPivLU<Eigen::MatrixXd>(jacobian(st))};
  }

 private:
  const Network* net_;
  Eigen::MatrixXd g_, b_;  // real/imag parts of the admittance matrix
  std::vector<int> pq_;
  std::vector<int> row_ang_, row_mag_;
  // neighbor lists (bus, G, B) of the tree-sparse admittance matrix
  std::vector<std::vector<std::tuple<int, double, double>>> adj_;
  mutable std::vector<double> cos_, sin_;

  void fill_currents_and_losses(ElectricalState& st) const;
  void computed_injections(const Eigen::VectorXd& v, const Eigen::VectorXd& a,
                           Eigen::VectorXd& p, Eigen::VectorXd& q) const;
};

}  // namespace commelec
