#pragma once

#include <cmath>
#include <vector>

namespace commelec {

// Active/reactive power pair. Units are context-dependent: kW/kVAr on the
// wire and in resource models, per-unit inside grid agents and load flow.
struct PQ {
  double p{0.0};
  double q{0.0};

  PQ() = default;
  PQ(double p_, double q_) : p(p_), q(q_) {}

  PQ operator+(const PQ& o) const { return {p + o.p, q + o.q}; }
  PQ operator-(const PQ& o) const { return {p - o.p, q - o.q}; }
  PQ operator*(double s) const { return {p * s, q * s}; }
  PQ& operator+=(const PQ& o) {
    p += o.p;
    q += o.q;
    return *this;
  }
};

inline double dot(const PQ& a, const PQ& b) { return a.p * b.p + a.q * b.q; }
inline double norm(const PQ& a) { return std::hypot(a.p, a.q); }
inline double dist(const PQ& a, const PQ& b) { return norm(a - b); }
inline double cross(const PQ& o, const PQ& a, const PQ& b) {
  return (a.p - o.p) * (b.q - o.q) - (a.q - o.q) * (b.p - o.p);
}

// Axis-aligned box, the rectangular super-belief shape.
struct Box {
  double p_lo{0}, p_hi{0}, q_lo{0}, q_hi{0};

  static Box at(const PQ& x) { return {x.p, x.p, x.q, x.q}; }
  static Box hull(const Box& a, const Box& b) {
    return {std::min(a.p_lo, b.p_lo), std::max(a.p_hi, b.p_hi),
            std::min(a.q_lo, b.q_lo), std::max(a.q_hi, b.q_hi)};
  }
  void include(const PQ& x) {
    p_lo = std::min(p_lo, x.p);
    p_hi = std::max(p_hi, x.p);
    q_lo = std::min(q_lo, x.q);
    q_hi = std::max(q_hi, x.q);
  }
  void inflate(double r) {
    p_lo -= r;
    p_hi += r;
    q_lo -= r;
    q_hi += r;
  }
  bool contains(const PQ& x, double tol = 0.0) const {
    return x.p >= p_lo - tol && x.p <= p_hi + tol && x.q >= q_lo - tol &&
           x.q <= q_hi + tol;
  }
  double diameter() const { return std::hypot(p_hi - p_lo, q_hi - q_lo); }
  PQ center() const { return {0.5 * (p_lo + p_hi), 0.5 * (q_lo + q_hi)}; }
  // Corner vertices; degenerate dimensions (width below eps) collapse.
  std::vector<PQ> vertices(double eps = 1e-6) const;
};

// Convex hull of a point set, counter-clockwise, no repeated endpoint.
// Collinear inputs yield the two extreme points; a single point yields itself.
std::vector<PQ> convex_hull(std::vector<PQ> pts);

// Point-in-convex-polygon test. Polygon is CCW. Degenerate polygons
// (point, segment) are handled via distance.
bool polygon_contains(const std::vector<PQ>& poly, const PQ& x, double tol = 1e-9);

// Closest point on (boundary or interior of) a convex polygon.
PQ polygon_project(const std::vector<PQ>& poly, const PQ& x);

PQ polygon_centroid(const std::vector<PQ>& poly);

bool polygon_is_convex_ccw(const std::vector<PQ>& poly, double tol = 1e-9);

// Closest point on segment [a,b].
PQ segment_project(const PQ& a, const PQ& b, const PQ& x);
double segment_distance(const PQ& a, const PQ& b, const PQ& x);

// Distance from x to a polyline through pts (>= 1 point).
double polyline_distance(const std::vector<PQ>& pts, const PQ& x);

}  // namespace commelec
