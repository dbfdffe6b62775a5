#include "commelec/belief.hpp"

#include <algorithm>
#include <cmath>

namespace commelec {

int nearest_representative(const std::vector<PQ>& reps, const PQ& u) {
  int best = -1;
  double best_d = 0;
  for (size_t i = 0; i < reps.size(); ++i) {
    double d = dist(reps[i], u);
    if (best < 0 || d < best_d - 1e-12 ||
        (std::abs(d - best_d) <= 1e-12 &&
         (reps[i].p < reps[best].p - 1e-12 ||
          (std::abs(reps[i].p - reps[best].p) <= 1e-12 &&
           reps[i].q < reps[best].q)))) {
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  return best;
}

namespace {

// The PV drop path: P slides from u.p down to max(u.p - dp_max, 0) while Q
// stays at u.q until the power-factor cone binds, then follows the cone
// edge. Endpoints reproduce the advertised segment rule.
std::vector<PQ> pv_drop_path(const BeliefPvDrop& b, const PQ& u) {
  const double p_end = std::max(u.p - b.dp_max, 0.0);
  std::vector<PQ> path{u};
  if (b.cos_min <= 0.0) {
    path.push_back({p_end, u.q});
    return path;
  }
  const double t = std::sqrt(std::max(0.0, 1.0 - b.cos_min * b.cos_min)) /
                   std::max(b.cos_min, 1e-9);
  auto q_at = [&](double p) {
    const double lim = t * std::max(p, 0.0);
    return std::clamp(u.q, -lim, lim);
  };
  const double p_kink = std::abs(u.q) / std::max(t, 1e-12);
  if (p_kink < u.p && p_kink > p_end)
    path.push_back({p_kink, q_at(p_kink)});
  path.push_back({p_end, q_at(p_end)});
  return path;
}

std::vector<PQ> wb_points(const BeliefWbSet& b, const PQ& u) {
  std::vector<PQ> pts;
  if (b.include_request) pts.push_back({u.p, 0.0});
  if (b.include_zero) pts.push_back({0.0, 0.0});
  if (b.include_full) pts.push_back({-b.p_full, 0.0});
  if (pts.empty()) pts.push_back({u.p, 0.0});
  return pts;
}

std::vector<PQ> sg_band_points(const BeliefSgBand& b, const PQ& u,
                               double* tube_out) {
  std::vector<PQ> pts;
  pts.reserve(b.cap_sweep.size());
  for (const auto& cap : b.cap_sweep) pts.push_back(project_to_profile(cap, u));
  double tube = 0;
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    tube = std::max(tube, dist(pts[i], pts[i + 1]));
  if (tube_out) *tube_out = 0.5 * tube + 1e-9;
  return pts;
}

}  // namespace

BeliefSet belief_set(const BeliefDescriptor& bf, const PQ& requested) {
  return std::visit(
      [&](const auto& b) -> BeliefSet {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, BeliefIdeal>) {
          return SetPoints{{requested}};
        } else if constexpr (std::is_same_v<T, BeliefPvDrop>) {
          return SetPolyline{pv_drop_path(b, requested), 1e-9};
        } else if constexpr (std::is_same_v<T, BeliefWbSet>) {
          return SetPoints{wb_points(b, requested)};
        } else if constexpr (std::is_same_v<T, BeliefUlArea>) {
          return SetSemicircle{b.rho_max};
        } else if constexpr (std::is_same_v<T, BeliefSgBand>) {
          if (profile_contains(b.cap_small, requested, 1e-9))
            return SetPoints{{requested}};
          double tube = 0;
          auto pts = sg_band_points(b, requested, &tube);
          return SetPolyline{std::move(pts), tube};
        } else {
          if (b.reps.empty()) throw DomainError("empty aggregated belief");
          int i = nearest_representative(b.reps, requested);
          return SetRect{b.rects[i]};
        }
      },
      bf);
}

bool set_member(const BeliefSet& s, const PQ& x, double tol) {
  return std::visit(
      [&](const auto& v) -> bool {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SetPoints>) {
          for (const auto& p : v.pts)
            if (dist(p, x) <= tol) return true;
          return false;
        } else if constexpr (std::is_same_v<T, SetPolyline>) {
          return polyline_distance(v.pts, x) <= v.tube + tol;
        } else if constexpr (std::is_same_v<T, SetSemicircle>) {
          return x.p <= tol && norm(x) <= v.rho_max + tol;
        } else {
          return v.box.contains(x, tol);
        }
      },
      s);
}

Box belief_rectangle(const BeliefDescriptor& bf, const PQ& requested) {
  return std::visit(
      [&](const auto& b) -> Box {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, BeliefIdeal>) {
          return Box::at(requested);
        } else if constexpr (std::is_same_v<T, BeliefPvDrop>) {
          auto path = pv_drop_path(b, requested);
          Box box = Box::at(path.front());
          for (const auto& p : path) box.include(p);
          return box;
        } else if constexpr (std::is_same_v<T, BeliefWbSet>) {
          auto pts = wb_points(b, requested);
          Box box = Box::at(pts.front());
          for (const auto& p : pts) box.include(p);
          return box;
        } else if constexpr (std::is_same_v<T, BeliefUlArea>) {
          return Box{-b.rho_max, 0.0, -b.rho_max, b.rho_max};
        } else if constexpr (std::is_same_v<T, BeliefSgBand>) {
          if (profile_contains(b.cap_small, requested, 1e-9))
            return Box::at(requested);
          double tube = 0;
          auto pts = sg_band_points(b, requested, &tube);
          Box box = Box::at(pts.front());
          for (const auto& p : pts) box.include(p);
          box.inflate(tube);
          return box;
        } else {
          if (b.reps.empty()) throw DomainError("empty aggregated belief");
          return b.rects[nearest_representative(b.reps, requested)];
        }
      },
      bf);
}

bool check_validity(const PQProfile& profile, const BeliefDescriptor& bf,
                    const PQ& requested, const PQ& actual, double tol) {
  if (!profile_contains(profile, requested, 1e-6))
    throw DomainError("requested setpoint outside advertised profile");
  return set_member(belief_set(bf, requested), actual, tol);
}

}  // namespace commelec
