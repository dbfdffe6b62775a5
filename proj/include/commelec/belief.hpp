#pragma once

#include <variant>
#include <vector>

#include "commelec/profile.hpp"

namespace commelec {

// Belief function descriptors: a typed rule mapping a requested setpoint to
// the set of actual setpoints the resource might implement.

struct BeliefIdeal {};  // BF(u) = {u}

// PV volatility: production may drop by up to dp_max, reactive power rides
// the power-factor cone. cos_min = 0 disables the cone (straight segment).
struct BeliefPvDrop {
  double dp_max{0};
  double cos_min{0};
};

// Boiler hysteresis outcomes: subset of {request, 0, -p_full}, Q = 0.
struct BeliefWbSet {
  double p_full{0};  // maximal heating power (positive magnitude)
  bool include_request{true};
  bool include_zero{false};
  bool include_full{false};
};

// Uncontrollable load: the full semicircle of operation
// (consumption only, any power factor).
struct BeliefUlArea {
  double rho_max{0};
};

// Synchronous machine: capability sets swept over the feasible voltage
// band. cap_sweep is ordered from V_min to V_max; cap_small is the
// intersection (evaluated at V_min).
struct BeliefSgBand {
  PQProfile cap_small;
  std::vector<PQProfile> cap_sweep;
};

// Aggregated belief: representative points with per-point rectangles;
// lookup maps a request to its nearest representative.
struct BeliefAggRect {
  std::vector<PQ> reps;
  std::vector<Box> rects;
};

using BeliefDescriptor = std::variant<BeliefIdeal, BeliefPvDrop, BeliefWbSet,
                                      BeliefUlArea, BeliefSgBand, BeliefAggRect>;

// Concrete set returned by evaluating a belief at a request.
struct SetPoints {
  std::vector<PQ> pts;
};
struct SetPolyline {
  std::vector<PQ> pts;
  double tube{0};  // tolerance band around the polyline
};
struct SetSemicircle {
  double rho_max{0};
};
struct SetRect {
  Box box;
};
using BeliefSet = std::variant<SetPoints, SetPolyline, SetSemicircle, SetRect>;

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index of the nearest representative, ties broken toward lower P then Q.
int nearest_representative(const std::vector<PQ>& reps, const PQ& u);

BeliefSet belief_set(const BeliefDescriptor& bf, const PQ& requested);
bool set_member(const BeliefSet& s, const PQ& x, double tol = 1e-6);

// Axis-aligned superset of belief_set(bf, requested).
Box belief_rectangle(const BeliefDescriptor& bf, const PQ& requested);

// Runtime assertion of the validity property: the actual setpoint lies in
// the belief of the requested one (requested must be in the profile).
bool check_validity(const PQProfile& profile, const BeliefDescriptor& bf,
                    const PQ& requested, const PQ& actual, double tol = 1e-6);

}  // namespace commelec
