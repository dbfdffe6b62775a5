#pragma once

#include <functional>

#include "commelec/grid_agent.hpp"

namespace commelec {

// Remembers the last exhaustively certified hull so unchanged (or shrunk)
// hulls skip the full vertex sweep on later cycles.
struct HullCertCache {
  bool valid{false};
  std::vector<std::pair<int, Box>> boxes;
  double v_slack{1.0};
};

struct AggregationConfig {
  int m_samples{100};
  int belief_grid{5};  // partition points per axis
  int cost_grid{4};
  double locality_radius_pu{0.02};  // alpha * G_max
  int draw_cap_mult{20};
  int hull_exhaustive_cap{256};  // above this, directed-vertex probing
  HullCertCache* cert_cache{nullptr};
};

struct LossBounds {
  double lp_max{0}, lp_min{0}, lq_max{0}, lq_min{0};  // kW
  int samples{0}, failures{0};
};

// The internal GA's decision process as a map from a PCC request to follower
// setpoints; nullopt marks failure at that point. `hull` carries the
// certified sample hull for the fast admissibility path.
using GaMap = std::function<std::optional<std::vector<PQ>>(
    const PQ& u0_kw, int idx, const std::vector<Box>* hull)>;

struct AggregationOutcome {
  bool degenerate{false};
  std::vector<PQ> polygon_kw;  // aggregated PQt profile (convex, CCW)
  std::vector<PQ> partition;   // belief representatives
  std::vector<Box> rects;      // per-representative PCC rectangle
  std::vector<std::vector<PQ>> f_at;  // follower setpoints per representative
  CostInterpGrid cost;
  int samples_accepted{0};
  int draws{0};
};

// Loss envelope of the subsystem over its joint profile, estimated by random
// joint setpoints plus profile extreme points. Load-flow failures are
// skipped and counted.
LossBounds offline_loss_bounds(const GridAgent& ga, const GARoundInput& in,
                               int n_samples, std::uint64_t seed);

// Locality-ball sampling with the strengthened (convex-hull) admissibility
// requirement; returns the convex hull of ideal PCC powers. Outputs the
// accepted sample count via the outcome fields of aggregate_subsystem.
std::vector<PQ> sample_aggregate_pqt(const GridAgent& ga,
                                     const GARoundInput& in,
                                     const AggregationConfig& cfg,
                                     int* accepted = nullptr,
                                     int* draws = nullptr,
                                     std::vector<Box>* hull_out = nullptr);

// Rectangular belief over a uniform partition of the polygon per the
// loss-bound construction.
void aggregate_belief(const GridAgent& ga, const GARoundInput& in,
                      const std::vector<PQ>& polygon, const GaMap& f,
                      const LossBounds& lb, int grid,
                      std::vector<PQ>* partition, std::vector<Box>* rects,
                      std::vector<std::vector<PQ>>* f_at,
                      const std::vector<Box>* hull = nullptr);

// Aggregated cost: objective value at the gradient-step result on a sparse
// partition, linearly interpolated on a grid-cell triangulation.
CostInterpGrid aggregate_cost(const GridAgent& ga, const GARoundInput& in,
                              const std::vector<PQ>& polygon, const GaMap& f,
                              int grid, const std::vector<Box>* hull = nullptr);

// Everything an internal GA advertises upward.
AggregationOutcome aggregate_subsystem(const GridAgent& ga,
                                       const GARoundInput& in,
                                       const AggregationConfig& cfg,
                                       const LossBounds& lb, const GaMap& f);

struct DeltaCheckResult {
  bool ok{true};
  double worst_distance{0};
  double delta{0};
  int exact_points{0};
};

// Compares the approximate aggregated profile with the brute-force exact one
// on a small instance: every polygon point must be within delta (max loss
// norm) of the exact set.
DeltaCheckResult delta_approximation_check(const GridAgent& ga,
                                           const GARoundInput& in,
                                           const std::vector<PQ>& polygon,
                                           int grid_steps);

// Uniform grid points of the polygon's bounding box kept inside the polygon;
// falls back to the centroid when too few survive.
std::vector<PQ> polygon_partition(const std::vector<PQ>& polygon, int grid);

// One-step flat-vs-hierarchical comparison on an ideal toy (exact Thevenin,
// lossless wiring, strict PCC tracking): returns the setpoint difference in
// kW. Equality is the composition property under the ideal premises.
struct CompositionCheck {
  PQ u_flat_kw;
  PQ u_hier_kw;
  double difference_kw{0};
};
CompositionCheck ideal_composition_check();

}  // namespace commelec
