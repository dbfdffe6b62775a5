#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "commelec/message.hpp"
#include "commelec/sensitivity.hpp"

namespace commelec {

class CapExceededError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GaRole { Internal, Root };

struct FollowerRef {
  std::string id;
  int bus{-1};
  double weight{1.0};
};

struct GAConfig {
  GaRole role{GaRole::Internal};
  double alpha{0.1};           // gradient step
  double w0{100.0};            // PCC / slack-cost weight
  double beta{0.1};            // voltage band half-width (pu)
  double g_max{0.2};           // gradient bound (pu); locality = alpha*g_max
  double step_clip_pu{0.02};   // cap on ||alpha * gradient||
  int n_dirs{8};               // projection search directions
  int proj_iter_cap{50};
  int vertex_cap{4096};
  int proj_lf_budget{40000};   // load-flow budget per projection call
  double diverged_violation{10.0};
  double rect_eps_kw{1e-6};    // degenerate-rectangle threshold
  bool strict_tracking{false}; // ideal-composition validation mode
};

// One decision round's inputs, all expressed on the GA's network view.
struct GARoundInput {
  std::vector<Advertisement> ads;  // aligned with the follower list
  std::vector<PQ> x_hat_kw;        // estimated implemented setpoints
  ElectricalState state;           // measured electrical state at x_hat
  double v_slack{1.0};
  std::vector<double> i_limit_pu;  // per-branch effective limits
  std::optional<PQ> leader_request_kw;    // internal role
  std::optional<Advertisement> slack_ad;  // root role
  // Per-follower rectangle hull already certified admissible (the sampled
  // aggregation hull): targets whose rectangles it covers need no fresh
  // vertex sweep.
  const std::vector<Box>* certified_hull{nullptr};
  std::uint64_t seed{0};
};

struct GADiagnostics {
  double cost_c{0}, j0{0}, j{0};
  double grad_norm{0};       // pu
  double delta_before{0};    // max violation of the raw gradient target
  int proj_iterations{0};
  int load_flows{0};
  bool fallback{false};
};

struct GARoundOutput {
  std::vector<PQ> u_kw;
  GADiagnostics diag;
};

struct AdmissibilityReport {
  double delta_max{0};
  int combinations{0};
  int load_flows{0};
};

// Weighted total advertised cost; throws DomainError if a setpoint leaves
// its profile.
double total_cost(const std::vector<PQ>& u_kw,
                  const std::vector<Advertisement>& ads,
                  const std::vector<double>& weights);

// Barrier over the feasible-state region; +inf once any bound is reached.
double penalty_j(const ElectricalState& state, int slack_bus, double beta,
                 const std::vector<double>& i_limit_pu);

// PCC deviation penalty (internal) given powers in pu.
double penalty_j0_internal(double w0, const PQ& request_pu, const PQ& pcc_pu);
// Slack-resource cost penalty (root) with the slack power in kW.
double penalty_j0_root(double w0, const CostDescriptor& slack_cost,
                       const PQ& slack_kw);

class GridAgent {
 public:
  GridAgent(GAConfig cfg, const Network& net,
            std::vector<FollowerRef> followers, int pcc_branch = -1,
            bool pcc_at_from_end = false);

  const GAConfig& config() const { return cfg_; }
  GAConfig& config() { return cfg_; }
  const std::vector<FollowerRef>& followers() const { return followers_; }
  const Network& network() const { return *net_; }
  const LoadFlowSolver& solver() const { return solver_; }
  int pcc_branch() const { return pcc_branch_; }
  bool pcc_at_from_end() const { return pcc_at_from_; }

  // Solve the view's load flow for follower setpoints (kW).
  std::optional<ElectricalState> solve(const std::vector<PQ>& u_kw,
                                       double v_slack,
                                       const ElectricalState* warm = nullptr,
                                       double tol = 1e-8) const;

  // Subsystem export at the PCC (internal role), in pu.
  PQ pcc_export_pu(const ElectricalState& st) const;
  // Slack-resource injection (root role), in kW.
  PQ slack_injection_kw(const ElectricalState& st) const;

  // Gradient of C + J0 + J at x_hat under the sensitivity linearization;
  // entries ordered (P_1,Q_1,...,P_n,Q_n), per-pu. Throws DomainError when
  // the measured state is infeasible (J infinite).
  Eigen::VectorXd objective_gradient(const GARoundInput& in,
                                     const SensitivityMatrices& sens) const;

  // Algorithm 1: worst-case violation over belief-rectangle vertices
  // (reduced to per-bus rectangles, which is exact for the load flow).
  AdmissibilityReport admissibility_test(const std::vector<PQ>& u_kw,
                                         const GARoundInput& in,
                                         bool verdict_only = false) const;

  // Rectangle-level admissibility machinery, reused by the aggregation hull
  // test. Rects are per-follower (kW), reduced internally to per-bus sums.
  std::vector<Box> follower_rects(const std::vector<PQ>& u_kw,
                                  const std::vector<Advertisement>& ads) const;
  std::vector<std::pair<int, Box>> bus_boxes(
      const std::vector<Box>& follower_rects_kw) const;
  AdmissibilityReport admissibility_over_boxes(
      const std::vector<std::pair<int, Box>>& boxes, const GARoundInput& in,
      bool verdict_only = false,
      double abort_above = std::numeric_limits<double>::infinity()) const;
  // Monotonicity-directed probe: evaluates box corners plus, per branch, the
  // vertex selected by the current-sensitivity signs. Load-flow count stays
  // linear in the branch count.
  AdmissibilityReport admissibility_probe_directed(
      const std::vector<std::pair<int, Box>>& boxes,
      const GARoundInput& in) const;

  // Algorithm 2: randomized local projection onto the admissible set.
  std::vector<PQ> project_to_admissible(std::vector<PQ> u_kw,
                                        const GARoundInput& in,
                                        GADiagnostics* diag) const;

  GARoundOutput compute_setpoints(const GARoundInput& in) const;

  // Linearized objective value at setpoints u (used by tests and the
  // aggregated-cost construction).
  double linearized_objective(const std::vector<PQ>& u_kw,
                              const GARoundInput& in,
                              const SensitivityMatrices& sens) const;

 private:
  GAConfig cfg_;
  const Network* net_;
  LoadFlowSolver solver_;
  std::vector<FollowerRef> followers_;
  int pcc_branch_{-1};
  bool pcc_at_from_{false};

  void follower_injections(const std::vector<PQ>& u_kw, Eigen::VectorXd& p,
                           Eigen::VectorXd& q) const;
  double violation_distance(const std::optional<ElectricalState>& st,
                            const GARoundInput& in) const;
  std::vector<PQ> clamp_to_profiles(const std::vector<PQ>& u_kw,
                                    const std::vector<Advertisement>& ads) const;
};

}  // namespace commelec
