#include "commelec/geometry.hpp"

#include <algorithm>
#include <limits>

namespace commelec {

std::vector<PQ> Box::vertices(double eps) const {
  const bool flat_p = (p_hi - p_lo) <= eps;
  const bool flat_q = (q_hi - q_lo) <= eps;
  if (flat_p && flat_q) return {center()};
  if (flat_p) {
    double p = 0.5 * (p_lo + p_hi);
    return {{p, q_lo}, {p, q_hi}};
  }
  if (flat_q) {
    double q = 0.5 * (q_lo + q_hi);
    return {{p_lo, q}, {p_hi, q}};
  }
  return {{p_lo, q_lo}, {p_hi, q_lo}, {p_hi, q_hi}, {p_lo, q_hi}};
}

std::vector<PQ> convex_hull(std::vector<PQ> pts) {
  if (pts.size() <= 1) return pts;
  std::sort(pts.begin(), pts.end(), [](const PQ& a, const PQ& b) {
    return a.p < b.p || (a.p == b.p && a.q < b.q);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const PQ& a, const PQ& b) {
                          return a.p == b.p && a.q == b.q;
                        }),
            pts.end());
  const size_t n = pts.size();
  if (n <= 2) return pts;

  std::vector<PQ> hull(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {  // lower
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (size_t i = n - 1, t = k + 1; i-- > 0;) {  // upper
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 2) {  // all collinear points collapsed
    return {pts.front(), pts.back()};
  }
  return hull;
}

bool polygon_contains(const std::vector<PQ>& poly, const PQ& x, double tol) {
  if (poly.empty()) return false;
  if (poly.size() == 1) return dist(poly[0], x) <= tol;
  if (poly.size() == 2) return segment_distance(poly[0], poly[1], x) <= tol;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const PQ& a = poly[i];
    const PQ& b = poly[(i + 1) % n];
    const double edge = norm(b - a);
    if (edge < 1e-15) continue;
    // signed distance to edge line; negative side is outside for CCW
    if (cross(a, b, x) < -tol * edge) return false;
  }
  return true;
}

PQ polygon_project(const std::vector<PQ>& poly, const PQ& x) {
  if (poly.empty()) return x;
  if (poly.size() == 1) return poly[0];
  if (polygon_contains(poly, x, 0.0)) return x;
  PQ best = poly[0];
  double best_d = std::numeric_limits<double>::infinity();
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    PQ c = segment_project(poly[i], poly[(i + 1) % n], x);
    double d = dist(c, x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

PQ polygon_centroid(const std::vector<PQ>& poly) {
  if (poly.empty()) return {};
  if (poly.size() <= 2) {
    PQ s{};
    for (const auto& v : poly) s += v;
    return s * (1.0 / static_cast<double>(poly.size()));
  }
  double area2 = 0.0;
  PQ c{};
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const PQ& a = poly[i];
    const PQ& b = poly[(i + 1) % n];
    double w = a.p * b.q - b.p * a.q;
    area2 += w;
    c.p += (a.p + b.p) * w;
    c.q += (a.q + b.q) * w;
  }
  if (std::abs(area2) < 1e-14) {  // nearly degenerate
    PQ s{};
    for (const auto& v : poly) s += v;
    return s * (1.0 / static_cast<double>(n));
  }
  return c * (1.0 / (3.0 * area2));
}

bool polygon_is_convex_ccw(const std::vector<PQ>& poly, double tol) {
  if (poly.size() < 3) return true;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    if (cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) < -tol)
      return false;
  }
  return true;
}

PQ segment_project(const PQ& a, const PQ& b, const PQ& x) {
  PQ d = b - a;
  double len2 = dot(d, d);
  if (len2 < 1e-30) return a;
  double t = std::clamp(dot(x - a, d) / len2, 0.0, 1.0);
  return a + d * t;
}

double segment_distance(const PQ& a, const PQ& b, const PQ& x) {
  return dist(segment_project(a, b, x), x);
}

double polyline_distance(const std::vector<PQ>& pts, const PQ& x) {
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  if (pts.size() == 1) return dist(pts[0], x);
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    best = std::min(best, segment_distance(pts[i], pts[i + 1], x));
  return best;
}

}  // namespace commelec
