#include "commelec/profile.hpp"

#include <algorithm>
#include <cstdio>
#include <string>
#include <cmath>

namespace commelec {

namespace {

double cone_tan(const Cone& c) {
  double cm = std::clamp(c.cos_min, 1e-9, 1.0);
  return std::sqrt(std::max(0.0, 1.0 - cm * cm)) / cm;
}

// Projection onto the convex cone {s*p >= 0, |q| <= tan_max * s * p}.
PQ project_cone(const Cone& c, const PQ& x) {
  const double s = c.sign >= 0 ? 1.0 : -1.0;
  const double t = cone_tan(c);
  PQ y{s * x.p, x.q};  // work in the P>=0 half
  if (y.p >= 0 && std::abs(y.q) <= t * y.p + 1e-15) return x;
  // Edge directions (unit): (1, t) and (1, -t) normalized.
  const double inv = 1.0 / std::sqrt(1.0 + t * t);
  PQ e{inv, (y.q >= 0 ? t : -t) * inv};
  double proj = dot(y, e);
  PQ r = proj > 0 ? e * proj : PQ{0, 0};
  return {s * r.p, r.q};
}

}  // namespace

bool constraint_contains(const Constraint& c, const PQ& x, double tol) {
  return std::visit(
      [&](const auto& k) -> bool {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Disc>) {
          return dist(x, k.center) <= k.radius + tol;
        } else if constexpr (std::is_same_v<T, HalfPlane>) {
          double n = std::max(std::hypot(k.a, k.b), 1e-15);
          return (k.a * x.p + k.b * x.q - k.c) / n <= tol;
        } else if constexpr (std::is_same_v<T, Cone>) {
          double s = k.sign >= 0 ? 1.0 : -1.0;
          double p = s * x.p;
          if (p < -tol) return false;
          return std::abs(x.q) <= cone_tan(k) * std::max(p, 0.0) + tol;
        } else if constexpr (std::is_same_v<T, Interval>) {
          return x.p >= k.p_lo - tol && x.p <= k.p_hi + tol &&
                 x.q >= k.q_lo - tol && x.q <= k.q_hi + tol;
        } else if constexpr (std::is_same_v<T, Point>) {
          return dist(x, k.x) <= tol;
        } else {
          return polygon_contains(k.verts, x, tol);
        }
      },
      c);
}

PQ constraint_project(const Constraint& c, const PQ& x) {
  return std::visit(
      [&](const auto& k) -> PQ {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Disc>) {
          PQ d = x - k.center;
          double n = norm(d);
          if (n <= k.radius) return x;
          if (n < 1e-15) return k.center + PQ{k.radius, 0};
          return k.center + d * (k.radius / n);
        } else if constexpr (std::is_same_v<T, HalfPlane>) {
          double n2 = k.a * k.a + k.b * k.b;
          if (n2 < 1e-30) return x;
          double viol = k.a * x.p + k.b * x.q - k.c;
          if (viol <= 0) return x;
          return {x.p - viol * k.a / n2, x.q - viol * k.b / n2};
        } else if constexpr (std::is_same_v<T, Cone>) {
          return project_cone(k, x);
        } else if constexpr (std::is_same_v<T, Interval>) {
          return {std::clamp(x.p, k.p_lo, k.p_hi),
                  std::clamp(x.q, k.q_lo, k.q_hi)};
        } else if constexpr (std::is_same_v<T, Point>) {
          return k.x;
        } else {
          return polygon_project(k.verts, x);
        }
      },
      c);
}

bool profile_contains(const PQProfile& prof, const PQ& x, double tol) {
  for (const auto& c : prof.constraints)
    if (!constraint_contains(c, x, tol)) return false;
  return true;
}

PQ project_to_profile(const PQProfile& prof, const PQ& x, int max_iter) {
  const auto& cs = prof.constraints;
  if (cs.empty()) return x;
  if (profile_contains(prof, x, 1e-12)) return x;
  if (cs.size() == 1) return constraint_project(cs[0], x);

  // Dykstra's algorithm: cyclic projections with correction terms converge
  // to the nearest point of the intersection for convex sets. A correction
  // accumulated on a set that ends up inactive drains only slowly; restarting
  // from the stalled (near-feasible) iterate resolves those plateaus.
  std::vector<PQ> corr(cs.size(), PQ{});
  PQ y = x;
  int restarts = 0;
  for (int it = 0; it < max_iter; ++it) {
    PQ prev = y;
    for (size_t i = 0; i < cs.size(); ++i) {
      PQ z = y + corr[i];
      PQ proj = constraint_project(cs[i], z);
      corr[i] = z - proj;
      y = proj;
    }
    if (dist(prev, y) < 1e-12) {
      if (profile_contains(prof, y, 1e-9)) return y;
      if (restarts++ < 4) {
        for (auto& c : corr) c = PQ{};
      } else {
        break;
      }
    }
  }
  // Slowly converging (near-tangent) intersections: accept a point that is
  // feasible within a loose slack, else fail loudly.
  if (profile_contains(prof, y, 1e-5)) return y;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "from (%.17g,%.17g) at (%.17g,%.17g)", x.p,
                x.q, y.p, y.q);
  std::string msg = "project_to_profile: projections did not converge; ";
  msg += buf;
  for (const auto& c : cs) {
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Disc>) {
            std::snprintf(buf, sizeof(buf), " disc(%.17g,%.17g;%.17g)",
                          k.center.p, k.center.q, k.radius);
          } else if constexpr (std::is_same_v<T, HalfPlane>) {
            std::snprintf(buf, sizeof(buf), " hp(%.17g,%.17g,%.17g)", k.a, k.b,
                          k.c);
          } else if constexpr (std::is_same_v<T, Cone>) {
            std::snprintf(buf, sizeof(buf), " cone(%.17g,%d)", k.cos_min,
                          k.sign);
          } else if constexpr (std::is_same_v<T, Interval>) {
            std::snprintf(buf, sizeof(buf), " iv(%.17g,%.17g,%.17g,%.17g)",
                          k.p_lo, k.p_hi, k.q_lo, k.q_hi);
          } else if constexpr (std::is_same_v<T, Point>) {
            std::snprintf(buf, sizeof(buf), " pt(%.17g,%.17g)", k.x.p, k.x.q);
          } else {
            std::snprintf(buf, sizeof(buf), " poly(%zu)", k.verts.size());
          }
          msg += buf;
        },
        c);
  }
  throw GeometryError(msg);
}

PQ profile_anchor(const PQProfile& prof) { return project_to_profile(prof, PQ{}); }

Box profile_bbox(const PQProfile& prof, double cap) {
  Box b{-cap, cap, -cap, cap};
  for (const auto& c : prof.constraints) {
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Disc>) {
            b.p_lo = std::max(b.p_lo, k.center.p - k.radius);
            b.p_hi = std::min(b.p_hi, k.center.p + k.radius);
            b.q_lo = std::max(b.q_lo, k.center.q - k.radius);
            b.q_hi = std::min(b.q_hi, k.center.q + k.radius);
          } else if constexpr (std::is_same_v<T, Interval>) {
            b.p_lo = std::max(b.p_lo, k.p_lo);
            b.p_hi = std::min(b.p_hi, k.p_hi);
            b.q_lo = std::max(b.q_lo, k.q_lo);
            b.q_hi = std::min(b.q_hi, k.q_hi);
          } else if constexpr (std::is_same_v<T, Point>) {
            b.p_lo = std::max(b.p_lo, k.x.p);
            b.p_hi = std::min(b.p_hi, k.x.p);
            b.q_lo = std::max(b.q_lo, k.x.q);
            b.q_hi = std::min(b.q_hi, k.x.q);
          } else if constexpr (std::is_same_v<T, Polygon>) {
            if (k.verts.empty()) return;
            Box pb = Box::at(k.verts[0]);
            for (const auto& v : k.verts) pb.include(v);
            b.p_lo = std::max(b.p_lo, pb.p_lo);
            b.p_hi = std::min(b.p_hi, pb.p_hi);
            b.q_lo = std::max(b.q_lo, pb.q_lo);
            b.q_hi = std::min(b.q_hi, pb.q_hi);
          } else if constexpr (std::is_same_v<T, HalfPlane>) {
            // Axis-aligned half-planes tighten the box exactly.
            if (k.b == 0 && k.a != 0) {
              double lim = k.c / k.a;
              if (k.a > 0)
                b.p_hi = std::min(b.p_hi, lim);
              else
                b.p_lo = std::max(b.p_lo, lim);
            } else if (k.a == 0 && k.b != 0) {
              double lim = k.c / k.b;
              if (k.b > 0)
                b.q_hi = std::min(b.q_hi, lim);
              else
                b.q_lo = std::max(b.q_lo, lim);
            }
          }
          // Cone: leaves the box as-is (P sign handled by the paired
          // half-plane in practice).
        },
        c);
  }
  return b;
}

}  // namespace commelec
