#include "commelec/aggregation.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <cmath>

namespace commelec {

namespace {

std::vector<PQ> clamp_all(const GridAgent& ga, const std::vector<PQ>& u,
                          const std::vector<Advertisement>& ads) {
  std::vector<PQ> out(u.size());
  for (size_t i = 0; i < u.size(); ++i)
    out[i] = project_to_profile(ads[i].profile, u[i]);
  (void)ga;
  return out;
}

Box grow(const Box& a, const Box& b) { return Box::hull(a, b); }

bool covered(const Box& inner, const Box& outer) {
  return inner.p_lo >= outer.p_lo - 1e-12 && inner.p_hi <= outer.p_hi + 1e-12 &&
         inner.q_lo >= outer.q_lo - 1e-12 && inner.q_hi <= outer.q_hi + 1e-12;
}

AdmissibilityReport hull_admissible(const GridAgent& ga,
                                    const GARoundInput& in,
                                    const std::vector<Box>& hull,
                                    const AggregationConfig& cfg) {
  auto boxes = ga.bus_boxes(hull);
  long total = 1;
  for (auto& [bus, box] : boxes) {
    total *= static_cast<long>(box.vertices(ga.config().rect_eps_kw).size());
    if (total > cfg.hull_exhaustive_cap) break;
  }
  if (total <= cfg.hull_exhaustive_cap)
    return ga.admissibility_over_boxes(boxes, in, /*verdict_only=*/true);
  return ga.admissibility_probe_directed(boxes, in);
}

}  // namespace

LossBounds offline_loss_bounds(const GridAgent& ga, const GARoundInput& in,
                               int n_samples, std::uint64_t seed) {
  LossBounds lb;
  lb.lp_min = std::numeric_limits<double>::infinity();
  lb.lq_min = std::numeric_limits<double>::infinity();
  lb.lp_max = 0;
  lb.lq_max = -std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(ga.followers().size());

  std::vector<Box> bbox(n);
  for (int i = 0; i < n; ++i) bbox[i] = profile_bbox(in.ads[i].profile, 1e4);

  auto eval = [&](const std::vector<PQ>& u) {
    auto st = ga.solve(u, in.v_slack, &in.state);
    ++lb.samples;
    if (!st) {
      ++lb.failures;
      return;
    }
    double sum_p = 0, sum_q = 0;
    for (const auto& x : u) {
      sum_p += x.p;
      sum_q += x.q;
    }
    const double kw = ga.network().s_base_mva() * 1000.0;
    PQ pcc = ga.pcc_export_pu(*st) * kw;
    const double lp = sum_p - pcc.p;
    const double lq = sum_q - pcc.q;
    lb.lp_max = std::max(lb.lp_max, lp);
    lb.lp_min = std::min(lb.lp_min, lp);
    lb.lq_max = std::max(lb.lq_max, lq);
    lb.lq_min = std::min(lb.lq_min, lq);
  };

  // profile extreme points first
  std::vector<PQ> u(n);
  for (int corner = 0; corner < 4; ++corner) {
    for (int i = 0; i < n; ++i) {
      PQ v{corner & 1 ? bbox[i].p_hi : bbox[i].p_lo,
           corner & 2 ? bbox[i].q_hi : bbox[i].q_lo};
      u[i] = project_to_profile(in.ads[i].profile, v);
    }
    eval(u);
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int s = 0; s < n_samples; ++s) {
    for (int i = 0; i < n; ++i) {
      PQ v{bbox[i].p_lo + uni(rng) * (bbox[i].p_hi - bbox[i].p_lo),
           bbox[i].q_lo + uni(rng) * (bbox[i].q_hi - bbox[i].q_lo)};
      u[i] = project_to_profile(in.ads[i].profile, v);
    }
    eval(u);
  }
  lb.lp_min = std::max(0.0, std::min(lb.lp_min, lb.lp_max));
  if (!std::isfinite(lb.lq_min)) lb.lq_min = 0;
  if (!std::isfinite(lb.lq_max)) lb.lq_max = 0;
  return lb;
}

std::vector<PQ> sample_aggregate_pqt(const GridAgent& ga,
                                     const GARoundInput& in,
                                     const AggregationConfig& cfg,
                                     int* accepted_out, int* draws_out,
                                     std::vector<Box>* hull_out) {
  const int n = static_cast<int>(ga.followers().size());
  const double kw_per_pu = ga.network().s_base_mva() * 1000.0;
  std::mt19937_64 rng(in.seed ^ 0x5eedA66u);
  std::normal_distribution<double> gauss(0, 1);
  std::uniform_real_distribution<double> uni(0, 1);

  std::vector<PQ> x_hat = clamp_all(ga, in.x_hat_kw, in.ads);

  std::vector<Box> hull = ga.follower_rects(x_hat, in.ads);
  int accepted = 0, draws = 0;
  std::vector<PQ> sums;

  auto sum_of = [&](const std::vector<PQ>& u) {
    PQ s{};
    for (const auto& x : u) s += x;
    return s;
  };

  // the current operating point seeds the sample set
  if (hull_admissible(ga, in, hull, cfg).delta_max == 0.0) {
    sums.push_back(sum_of(x_hat));
    accepted = 1;
  } else {
    if (accepted_out) *accepted_out = 0;
    if (draws_out) *draws_out = 0;
    return {};  // current point not certifiable: degenerate aggregation
  }

  const double radius_kw = cfg.locality_radius_pu * kw_per_pu;
  const int draw_cap = cfg.draw_cap_mult * cfg.m_samples;
  while (accepted < cfg.m_samples && draws < draw_cap) {
    ++draws;
    Eigen::VectorXd dir(2 * n);
    for (int k = 0; k < 2 * n; ++k) dir(k) = gauss(rng);
    double nn = dir.norm();
    if (nn < 1e-12) continue;
    // uniform in the ball
    const double r = radius_kw * std::pow(uni(rng), 1.0 / (2.0 * n));
    dir *= r / nn;
    std::vector<PQ> u(n);
    for (int i = 0; i < n; ++i)
      u[i] = PQ{x_hat[i].p + dir(2 * i), x_hat[i].q + dir(2 * i + 1)};
    u = clamp_all(ga, u, in.ads);

    auto rects = ga.follower_rects(u, in.ads);
    bool inside_hull = true;
    for (int i = 0; i < n && inside_hull; ++i)
      inside_hull = covered(rects[i], hull[i]);
    if (inside_hull) {
      sums.push_back(sum_of(u));
      ++accepted;
      continue;
    }
    std::vector<Box> grown(n);
    for (int i = 0; i < n; ++i) grown[i] = grow(hull[i], rects[i]);
    if (hull_admissible(ga, in, grown, cfg).delta_max == 0.0) {
      hull = std::move(grown);
      sums.push_back(sum_of(u));
      ++accepted;
    }
  }
  if (accepted_out) *accepted_out = accepted;
  if (draws_out) *draws_out = draws;
  if (accepted < std::max(1, cfg.m_samples / 4)) return {};
  // final certification of the full hull with the exhaustive vertex sweep
  // (expansion steps may have used the directed probe); a hull covered by
  // the previously certified one under the same boundary voltage is already
  // proven by the vertex argument
  auto boxes = ga.bus_boxes(hull);
  bool cached_ok = false;
  if (cfg.cert_cache && cfg.cert_cache->valid &&
      std::abs(cfg.cert_cache->v_slack - in.v_slack) < 2e-4 &&
      boxes.size() == cfg.cert_cache->boxes.size()) {
    cached_ok = true;
    for (size_t i = 0; i < boxes.size() && cached_ok; ++i) {
      const auto& [bus, box] = boxes[i];
      const auto& [cbus, cbox] = cfg.cert_cache->boxes[i];
      cached_ok = bus == cbus && box.p_lo >= cbox.p_lo - 1e-9 &&
                  box.p_hi <= cbox.p_hi + 1e-9 &&
                  box.q_lo >= cbox.q_lo - 1e-9 && box.q_hi <= cbox.q_hi + 1e-9;
    }
  }
  if (!cached_ok) {
    // certify a slightly inflated hull so slow drift keeps hitting the cache
    auto inflated = boxes;
    for (auto& [bus, box] : inflated) {
      const double mp = std::max(1.0, 0.10 * (box.p_hi - box.p_lo));
      const double mq = std::max(1.0, 0.10 * (box.q_hi - box.q_lo));
      box.p_lo -= mp;
      box.p_hi += mp;
      box.q_lo -= mq;
      box.q_hi += mq;
    }
    if (ga.admissibility_over_boxes(inflated, in, true).delta_max == 0.0) {
      if (cfg.cert_cache) {
        cfg.cert_cache->valid = true;
        cfg.cert_cache->boxes = inflated;
        cfg.cert_cache->v_slack = in.v_slack;
      }
    } else if (ga.admissibility_over_boxes(boxes, in, true).delta_max > 0.0) {
      if (cfg.cert_cache) cfg.cert_cache->valid = false;
      return {};
    } else if (cfg.cert_cache) {
      cfg.cert_cache->valid = true;
      cfg.cert_cache->boxes = boxes;
      cfg.cert_cache->v_slack = in.v_slack;
    }
  }
  if (hull_out) *hull_out = hull;
  return convex_hull(sums);
}

std::vector<PQ> polygon_partition(const std::vector<PQ>& polygon, int grid) {
  if (polygon.empty()) return {};
  if (polygon.size() <= 2) return polygon;
  Box bb = Box::at(polygon[0]);
  for (const auto& v : polygon) bb.include(v);
  std::vector<PQ> pts;
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      PQ p{bb.p_lo + (bb.p_hi - bb.p_lo) * c / (grid - 1.0),
           bb.q_lo + (bb.q_hi - bb.q_lo) * r / (grid - 1.0)};
      if (polygon_contains(polygon, p, 1e-9)) pts.push_back(p);
    }
  if (pts.size() < 3) {
    pts.clear();
    pts.push_back(polygon_centroid(polygon));
    for (const auto& v : polygon) pts.push_back(v);
  }
  return pts;
}

void aggregate_belief(const GridAgent& ga, const GARoundInput& in,
                      const std::vector<PQ>& polygon, const GaMap& f,
                      const LossBounds& lb, int grid,
                      std::vector<PQ>* partition, std::vector<Box>* rects,
                      std::vector<std::vector<PQ>>* f_at,
                      const std::vector<Box>* hull) {
  partition->clear();
  rects->clear();
  f_at->clear();
  auto pts = polygon_partition(polygon, grid);
  int idx = 0;
  for (const auto& u0 : pts) {
    auto u = f(u0, idx++, hull);
    if (!u) continue;
    auto fr = ga.follower_rects(*u, in.ads);
    Box agg{0, 0, 0, 0};
    for (const auto& r : fr) {
      agg.p_lo += r.p_lo;
      agg.p_hi += r.p_hi;
      agg.q_lo += r.q_lo;
      agg.q_hi += r.q_hi;
    }
    agg.p_lo -= lb.lp_max;
    agg.p_hi -= lb.lp_min;
    agg.q_lo -= lb.lq_max;
    agg.q_hi -= lb.lq_min;
    partition->push_back(u0);
    rects->push_back(agg);
    f_at->push_back(std::move(*u));
  }
}

CostInterpGrid aggregate_cost(const GridAgent& ga, const GARoundInput& in,
                              const std::vector<PQ>& polygon, const GaMap& f,
                              int grid, const std::vector<Box>* hull) {
  CostInterpGrid out;
  if (polygon.empty()) return out;

  Box bb = Box::at(polygon[0]);
  for (const auto& v : polygon) bb.include(v);

  // grid-indexed points so cells triangulate deterministically
  std::vector<std::vector<int>> cell(grid, std::vector<int>(grid, -1));
  const double kw_per_pu = ga.network().s_base_mva() * 1000.0;
  std::vector<double> weights(ga.followers().size());
  for (size_t i = 0; i < weights.size(); ++i)
    weights[i] = ga.followers()[i].weight;

  int idx = 1000;  // distinct seed stream from the belief partition
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      PQ u0{bb.p_lo + (bb.p_hi - bb.p_lo) * c / std::max(grid - 1.0, 1.0),
            bb.q_lo + (bb.q_hi - bb.q_lo) * r / std::max(grid - 1.0, 1.0)};
      if (polygon.size() >= 3 && !polygon_contains(polygon, u0, 1e-9)) continue;
      if (polygon.size() < 3) u0 = polygon_project(polygon, u0);
      auto u = f(u0, idx++, hull);
      if (!u) continue;
      auto st = ga.solve(*u, in.v_slack, &in.state);
      if (!st) continue;
      double j = penalty_j(*st, ga.network().slack_bus(), ga.config().beta,
                           in.i_limit_pu);
      if (!std::isfinite(j)) continue;
      double cost = j;
      try {
        cost += total_cost(*u, in.ads, weights);
      } catch (const DomainError&) {
        continue;
      }
      PQ pcc = ga.pcc_export_pu(*st) * kw_per_pu;
      cost += penalty_j0_internal(ga.config().w0, u0 * (1.0 / kw_per_pu),
                                  pcc * (1.0 / kw_per_pu));
      cell[r][c] = static_cast<int>(out.pts.size());
      out.pts.push_back(u0);
      out.vals.push_back(cost);
    }

  for (int r = 0; r + 1 < grid; ++r)
    for (int c = 0; c + 1 < grid; ++c) {
      int a = cell[r][c], b = cell[r][c + 1], d = cell[r + 1][c + 1],
          e = cell[r + 1][c];
      int present = (a >= 0) + (b >= 0) + (d >= 0) + (e >= 0);
      if (present == 4) {
        out.tris.push_back({a, b, d});
        out.tris.push_back({a, d, e});
      } else if (present == 3) {
        std::array<int, 3> t{};
        int k = 0;
        for (int v : {a, b, d, e})
          if (v >= 0) t[k++] = v;
        out.tris.push_back(t);
      }
    }
  return out;
}

AggregationOutcome aggregate_subsystem(const GridAgent& ga,
                                       const GARoundInput& in,
                                       const AggregationConfig& cfg,
                                       const LossBounds& lb, const GaMap& f) {
  AggregationOutcome out;
  std::vector<Box> hull;
  out.polygon_kw = sample_aggregate_pqt(ga, in, cfg, &out.samples_accepted,
                                        &out.draws, &hull);
  const std::vector<Box>* hull_p = hull.empty() ? nullptr : &hull;

  if (out.polygon_kw.empty()) {
    // degenerate: advertise the current PCC power only
    out.degenerate = true;
    const double kw = ga.network().s_base_mva() * 1000.0;
    PQ pcc = ga.pcc_export_pu(in.state) * kw;
    out.polygon_kw = {pcc};
    out.partition = {pcc};
    auto fr = ga.follower_rects(clamp_all(ga, in.x_hat_kw, in.ads), in.ads);
    Box agg{0, 0, 0, 0};
    for (const auto& r : fr) {
      agg.p_lo += r.p_lo;
      agg.p_hi += r.p_hi;
      agg.q_lo += r.q_lo;
      agg.q_hi += r.q_hi;
    }
    agg.p_lo -= lb.lp_max;
    agg.p_hi -= lb.lp_min;
    agg.q_lo -= lb.lq_max;
    agg.q_hi -= lb.lq_min;
    out.rects = {agg};
    out.f_at = {clamp_all(ga, in.x_hat_kw, in.ads)};
    out.cost.pts = {pcc};
    out.cost.vals = {0.0};
    return out;
  }

  aggregate_belief(ga, in, out.polygon_kw, f, lb, cfg.belief_grid,
                   &out.partition, &out.rects, &out.f_at, hull_p);
  if (out.partition.empty()) {
    out.degenerate = true;
    const double kw = ga.network().s_base_mva() * 1000.0;
    PQ pcc = ga.pcc_export_pu(in.state) * kw;
    out.polygon_kw = {pcc};
    out.partition = {pcc};
    out.rects = {Box::at(pcc)};
    out.f_at = {clamp_all(ga, in.x_hat_kw, in.ads)};
    out.cost.pts = {pcc};
    out.cost.vals = {0.0};
    return out;
  }
  out.cost = aggregate_cost(ga, in, out.polygon_kw, f, cfg.cost_grid, hull_p);
  if (out.cost.pts.size() < 3) {
    // retain a usable constant cost if the sparse partition collapsed
    out.cost.pts = {out.partition.front()};
    out.cost.vals = {0.0};
    out.cost.tris.clear();
  }
  return out;
}

DeltaCheckResult delta_approximation_check(const GridAgent& ga,
                                           const GARoundInput& in,
                                           const std::vector<PQ>& polygon,
                                           int grid_steps) {
  DeltaCheckResult res;
  const int n = static_cast<int>(ga.followers().size());
  const double kw_per_pu = ga.network().s_base_mva() * 1000.0;

  // brute-force exact aggregated profile over a grid of the joint profile
  std::vector<Box> bbox(n);
  for (int i = 0; i < n; ++i) bbox[i] = profile_bbox(in.ads[i].profile, 1e4);
  std::vector<PQ> exact;
  double max_loss = 0;

  std::vector<int> idx(2 * n, 0);
  const int steps = grid_steps;
  while (true) {
    std::vector<PQ> u(n);
    for (int i = 0; i < n; ++i) {
      double fp = idx[2 * i] / std::max(steps - 1.0, 1.0);
      double fq = idx[2 * i + 1] / std::max(steps - 1.0, 1.0);
      u[i] = {bbox[i].p_lo + fp * (bbox[i].p_hi - bbox[i].p_lo),
              bbox[i].q_lo + fq * (bbox[i].q_hi - bbox[i].q_lo)};
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i)
      ok = profile_contains(in.ads[i].profile, u[i], 1e-9);
    if (ok && ga.admissibility_test(u, in, true).delta_max == 0.0) {
      auto st = ga.solve(u, in.v_slack, &in.state);
      if (st) {
        PQ pcc = ga.pcc_export_pu(*st) * kw_per_pu;
        exact.push_back(pcc);
        PQ sum{};
        for (const auto& x : u) sum += x;
        max_loss = std::max(max_loss, norm(sum - pcc));
      }
    }
    int d = 0;
    for (; d < 2 * n; ++d) {
      if (++idx[d] < steps) break;
      idx[d] = 0;
    }
    if (d == 2 * n) break;
  }
  res.exact_points = static_cast<int>(exact.size());
  res.delta = max_loss;
  if (exact.empty()) {
    res.ok = polygon.empty();
    return res;
  }

  // dense samples of the approximate polygon vs the exact point set
  auto samples = polygon_partition(polygon, 9);
  for (const auto& s : samples) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : exact) best = std::min(best, dist(s, e));
    res.worst_distance = std::max(res.worst_distance, best);
  }
  // grid discretization slack of the exact set
  double slack = 0;
  for (int i = 0; i < n; ++i)
    slack += std::hypot(bbox[i].p_hi - bbox[i].p_lo,
                        bbox[i].q_hi - bbox[i].q_lo) /
             std::max(steps - 1, 1);
  res.ok = res.worst_distance <= res.delta + slack + 1e-9;
  return res;
}


CompositionCheck ideal_composition_check() {
  GridModel g;
  g.s_base_mva = 1.0;
  g.line_types["IDEAL"] = {1e-7, 1e-7, 0.0, 1e9, 1e18};
  g.buses = {{"S", 0.4, true}, {"A", 0.4, false}, {"B", 0.4, false}};
  g.lines = {{"S", "A", "IDEAL", 1.0}, {"A", "B", "IDEAL", 1.0}};
  Network flat_net = Network::build(g);

  const double a_cost = 0.01, w1 = 1.0, alpha = 0.05;
  Advertisement dev_ad;
  dev_ad.agent_id = "dev";
  dev_ad.profile = PQProfile::disc(50.0);
  dev_ad.belief = BeliefIdeal{};
  dev_ad.cost = CostLinearPQuadQ{a_cost, 0.0};
  Advertisement slack_ad;
  slack_ad.agent_id = "slack";
  slack_ad.profile = PQProfile::disc(1000.0);
  slack_ad.belief = BeliefIdeal{};
  slack_ad.cost = CostConstant{};
  const PQ x_hat{5.0, 1.0};
  const double inf = std::numeric_limits<double>::infinity();

  // interior steps: the equality only holds while no profile boundary binds
  const double clip = 0.002;
  GAConfig fc;
  fc.role = GaRole::Root;
  fc.alpha = alpha;
  fc.step_clip_pu = clip;
  GridAgent flat_ga(fc, flat_net, {{"dev", 2, w1}});
  GARoundInput fin;
  fin.ads = {dev_ad};
  fin.x_hat_kw = {x_hat};
  fin.state = *flat_ga.solve({x_hat}, 1.0);
  fin.i_limit_pu.assign(2, inf);
  fin.slack_ad = slack_ad;
  CompositionCheck out;
  out.u_flat_kw = flat_ga.compute_setpoints(fin).u_kw[0];

  GridModel gi;
  gi.s_base_mva = 1.0;
  gi.line_types["IDEAL"] = g.line_types["IDEAL"];
  gi.buses = {{"VS", 0.4, true}, {"A", 0.4, false}, {"B", 0.4, false}};
  gi.lines = {{"VS", "A", "IDEAL", 1.0}, {"A", "B", "IDEAL", 1.0}};
  Network int_net = Network::build(gi);
  GAConfig ic;
  ic.role = GaRole::Internal;
  ic.alpha = alpha;
  ic.strict_tracking = true;  // ideal premise: strict PCC constraint
  GridAgent int_ga(ic, int_net, {{"dev", 2, w1}}, 0, false);
  GARoundInput iin;
  iin.ads = {dev_ad};
  iin.x_hat_kw = {x_hat};
  iin.state = *int_ga.solve({x_hat}, 1.0);
  iin.i_limit_pu.assign(2, inf);

  LossBounds lb{};  // lossless toy
  GaMap f = [&](const PQ& u0, int idx,
                const std::vector<Box>* hull) -> std::optional<std::vector<PQ>> {
    GARoundInput local = iin;
    local.leader_request_kw = u0;
    local.certified_hull = hull;
    local.seed = 77 + idx;
    return int_ga.compute_setpoints(local).u_kw;
  };
  AggregationConfig acfg;
  acfg.locality_radius_pu = 0.05;
  auto agg = aggregate_subsystem(int_ga, iin, acfg, lb, f);

  GridModel gr;
  gr.s_base_mva = 1.0;
  gr.line_types["IDEAL"] = g.line_types["IDEAL"];
  gr.buses = {{"S", 0.4, true}, {"A", 0.4, false}};
  gr.lines = {{"S", "A", "IDEAL", 1.0}};
  Network root_net = Network::build(gr);
  GAConfig rc;
  rc.role = GaRole::Root;
  rc.alpha = alpha;
  rc.step_clip_pu = clip;
  GridAgent root_ga(rc, root_net, {{"lvga", 1, 1.0}});
  Advertisement up;
  up.agent_id = "lvga";
  up.profile = agg.polygon_kw.size() == 1
                   ? PQProfile::singleton(agg.polygon_kw[0])
                   : PQProfile::polygon(agg.polygon_kw);
  up.belief = BeliefAggRect{agg.partition, agg.rects};
  up.cost = agg.cost;
  GARoundInput rin;
  rin.ads = {up};
  rin.x_hat_kw = {x_hat};  // lossless: the PCC power equals the device power
  rin.state = *root_ga.solve({x_hat}, 1.0);
  rin.i_limit_pu.assign(1, inf);
  rin.slack_ad = slack_ad;
  PQ u0_root = root_ga.compute_setpoints(rin).u_kw[0];
  GARoundInput iin2 = iin;
  iin2.leader_request_kw = u0_root;
  out.u_hier_kw = int_ga.compute_setpoints(iin2).u_kw[0];
  out.difference_kw = dist(out.u_flat_kw, out.u_hier_kw);
  return out;
}

}  // namespace commelec

