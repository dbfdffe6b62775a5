#pragma once

#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "commelec/geometry.hpp"

namespace commelec {

// Convex constraint families a PQt profile may be built from.
// Units: kW / kVAr.

struct Disc {  // ||x - center|| <= radius
  PQ center{};
  double radius{0};
};

struct HalfPlane {  // a*P + b*Q <= c
  double a{0}, b{0}, c{0};
};

// Power-factor cone: |P| / sqrt(P^2+Q^2) >= cos_min, convexified by a sign
// restriction on P (sign=+1 keeps P>=0, sign=-1 keeps P<=0).
struct Cone {
  double cos_min{0};
  int sign{+1};
};

struct Interval {  // P in [p_lo,p_hi], Q in [q_lo,q_hi]
  double p_lo{0}, p_hi{0}, q_lo{0}, q_hi{0};
};

struct Point {  // singleton {x}
  PQ x{};
};

struct Polygon {  // convex polygon, CCW vertices
  std::vector<PQ> verts;
};

using Constraint = std::variant<Disc, HalfPlane, Cone, Interval, Point, Polygon>;

bool constraint_contains(const Constraint& c, const PQ& x, double tol);
PQ constraint_project(const Constraint& c, const PQ& x);

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A PQt profile: intersection of convex constraints. The empty constraint
// list denotes the whole plane.
struct PQProfile {
  std::vector<Constraint> constraints;

  static PQProfile whole_plane() { return {}; }
  static PQProfile singleton(const PQ& x) { return {{Point{x}}}; }
  static PQProfile disc(double radius) { return {{Disc{{}, radius}}}; }
  static PQProfile interval_p(double p_lo, double p_hi, double q = 0.0) {
    return {{Interval{p_lo, p_hi, q, q}}};
  }
  static PQProfile polygon(std::vector<PQ> verts) {
    return {{Polygon{std::move(verts)}}};
  }
};

// Membership within `tol` kW slack on every constraint.
bool profile_contains(const PQProfile& prof, const PQ& x, double tol = 1e-9);

// Nearest feasible point (Dykstra's cyclic projections for intersections;
// exact single-constraint projection otherwise). Throws GeometryError if the
// iteration fails to locate a feasible point, which indicates an empty or
// ill-posed intersection.
PQ project_to_profile(const PQProfile& prof, const PQ& x, int max_iter = 1500);

// A deterministic interior-ish point of the profile, used as seed for
// sampling. Computed by projecting the origin.
PQ profile_anchor(const PQProfile& prof);

// Bounding box of the profile (exact per constraint, intersected). Unbounded
// directions are clipped at +-bound_cap.
Box profile_bbox(const PQProfile& prof, double bound_cap = 1e7);

}  // namespace commelec
