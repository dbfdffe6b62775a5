#pragma once

#include <array>
#include <variant>
#include <vector>

#include "commelec/geometry.hpp"

namespace commelec {

// Virtual cost families. Values are dimensionless preferences; only the
// gradient steers the grid agent.

// Storage-style polynomial in normalized power p = (P - center) / scale:
//   k * ( dsoc * a * p^3 + b * p^2 + dsoc * c * p )
// which is the expanded form of k*dsoc*(a p^2 + (b/dsoc) p + c)*p. The cost
// vanishes identically when dsoc == 0 (no preference at the target state).
struct CostPolySoc {
  double k{1}, a{1}, b{0.2}, c{1};
  double dsoc{0};
  double center{0};  // kW; boilers center on the forecast demand
  double scale{1};   // kW; rated power
};

struct CostLinearPQuadQ {  // -a*P + b*Q^2
  double a{0}, b{0};
};

// a * (1 - eta(P)) with eta piecewise linear over samples (P ascending, kW).
struct CostEfficiency {
  double a{1};
  std::vector<double> p_samples;
  std::vector<double> eta;
};

struct CostConstant {
  double value{0};
};

// Aggregated cost: linear interpolation on a triangulated partition.
struct CostInterpGrid {
  std::vector<PQ> pts;
  std::vector<double> vals;
  std::vector<std::array<int, 3>> tris;
};

using CostDescriptor = std::variant<CostPolySoc, CostLinearPQuadQ,
                                    CostEfficiency, CostConstant, CostInterpGrid>;

double eval_cost(const CostDescriptor& c, double p, double q);
PQ cost_gradient(const CostDescriptor& c, double p, double q);

}  // namespace commelec
