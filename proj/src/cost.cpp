#include "commelec/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace commelec {

namespace {

double eta_at(const CostEfficiency& c, double p, double* slope_out) {
  const auto& xs = c.p_samples;
  const auto& ys = c.eta;
  if (xs.empty()) {
    if (slope_out) *slope_out = 0;
    return 1.0;
  }
  if (p <= xs.front()) {
    if (slope_out) *slope_out = 0;
    return ys.front();
  }
  if (p >= xs.back()) {
    if (slope_out) *slope_out = 0;
    return ys.back();
  }
  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    if (p <= xs[i + 1]) {
      double w = (p - xs[i]) / (xs[i + 1] - xs[i]);
      if (slope_out) *slope_out = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
      return ys[i] + w * (ys[i + 1] - ys[i]);
    }
  }
  if (slope_out) *slope_out = 0;
  return ys.back();
}

// Barycentric coordinates of x in triangle (a,b,c); returns min coordinate.
double barycentric(const PQ& a, const PQ& b, const PQ& c, const PQ& x,
                   double* l1, double* l2, double* l3) {
  const double det = (b.q - c.q) * (a.p - c.p) + (c.p - b.p) * (a.q - c.q);
  if (std::abs(det) < 1e-14) {
    *l1 = *l2 = *l3 = -1e9;
    return -1e9;
  }
  *l1 = ((b.q - c.q) * (x.p - c.p) + (c.p - b.p) * (x.q - c.q)) / det;
  *l2 = ((c.q - a.q) * (x.p - c.p) + (a.p - c.p) * (x.q - c.q)) / det;
  *l3 = 1.0 - *l1 - *l2;
  return std::min({*l1, *l2, *l3});
}

struct PlaneEval {
  double value;
  PQ grad;
};

PlaneEval interp_eval(const CostInterpGrid& g, const PQ& x) {
  if (g.pts.empty()) return {0.0, {}};
  if (g.pts.size() == 1) return {g.vals[0], {}};
  if (g.pts.size() == 2 || g.tris.empty()) {
    // linear along the segment through the first two points
    const PQ a = g.pts[0], b = g.pts[g.pts.size() == 2 ? 1 : g.pts.size() - 1];
    const double va = g.vals[0], vb = g.vals[g.pts.size() == 2 ? 1 : g.vals.size() - 1];
    PQ d = b - a;
    double len2 = dot(d, d);
    if (len2 < 1e-18) return {va, {}};
    double t = dot(x - a, d) / len2;
    PQ grad = d * ((vb - va) / len2);
    return {va + t * (vb - va), grad};
  }
  // pick the triangle that contains x, or the least-violating one
  int best = 0;
  double best_min = -std::numeric_limits<double>::infinity();
  double bl1 = 0, bl2 = 0, bl3 = 0;
  for (size_t t = 0; t < g.tris.size(); ++t) {
    double l1, l2, l3;
    double mn = barycentric(g.pts[g.tris[t][0]], g.pts[g.tris[t][1]],
                            g.pts[g.tris[t][2]], x, &l1, &l2, &l3);
    if (mn > best_min) {
      best_min = mn;
      best = static_cast<int>(t);
      bl1 = l1;
      bl2 = l2;
      bl3 = l3;
    }
    if (mn >= 0) break;  // containing triangle found
  }
  const auto& tr = g.tris[best];
  const PQ a = g.pts[tr[0]], b = g.pts[tr[1]], c = g.pts[tr[2]];
  const double va = g.vals[tr[0]], vb = g.vals[tr[1]], vc = g.vals[tr[2]];
  const double value = bl1 * va + bl2 * vb + bl3 * vc;
  // gradient of the plane through the three vertices
  const double det = (b.q - c.q) * (a.p - c.p) + (c.p - b.p) * (a.q - c.q);
  PQ grad{};
  if (std::abs(det) > 1e-14) {
    grad.p = (va * (b.q - c.q) + vb * (c.q - a.q) + vc * (a.q - b.q)) / det;
    grad.q = (va * (c.p - b.p) + vb * (a.p - c.p) + vc * (b.p - a.p)) / det;
  }
  return {value, grad};
}

}  // namespace

double eval_cost(const CostDescriptor& c, double p, double q) {
  return std::visit(
      [&](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, CostPolySoc>) {
          if (k.dsoc == 0.0) return 0.0;
          const double x = (p - k.center) / k.scale;
          return k.k * (k.dsoc * k.a * x * x * x + k.b * x * x + k.dsoc * k.c * x);
        } else if constexpr (std::is_same_v<T, CostLinearPQuadQ>) {
          return -k.a * p + k.b * q * q;
        } else if constexpr (std::is_same_v<T, CostEfficiency>) {
          return k.a * (1.0 - eta_at(k, p, nullptr));
        } else if constexpr (std::is_same_v<T, CostConstant>) {
          return k.value;
        } else {
          return interp_eval(k, {p, q}).value;
        }
      },
      c);
}

PQ cost_gradient(const CostDescriptor& c, double p, double q) {
  return std::visit(
      [&](const auto& k) -> PQ {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, CostPolySoc>) {
          if (k.dsoc == 0.0) return {};
          const double x = (p - k.center) / k.scale;
          const double d =
              k.k * (3 * k.dsoc * k.a * x * x + 2 * k.b * x + k.dsoc * k.c) /
              k.scale;
          return {d, 0.0};
        } else if constexpr (std::is_same_v<T, CostLinearPQuadQ>) {
          return {-k.a, 2 * k.b * q};
        } else if constexpr (std::is_same_v<T, CostEfficiency>) {
          double slope = 0;
          eta_at(k, p, &slope);
          return {-k.a * slope, 0.0};
        } else if constexpr (std::is_same_v<T, CostConstant>) {
          return {};
        } else {
          return interp_eval(k, {p, q}).grad;
        }
      },
      c);
}

}  // namespace commelec
