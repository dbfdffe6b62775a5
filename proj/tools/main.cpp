// Command-line front end: run scenarios, compare control methods, validate
// the aggregation machinery, solve standalone load flows, summarize runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "commelec/aggregation.hpp"
#include "commelec/engine.hpp"
#include "json.hpp"

using namespace commelec;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCollapse = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string scenario;
  std::string method;
  std::string topology;
  double duration = -1;
  std::uint64_t seed = 0;
  bool have_seed = false;
  std::string out_dir = "out";
  bool strict = false;
};

Scenario load_with_overrides(const CommonOpts& o) {
  Scenario sc = scenario_from_file(o.scenario);
  if (!o.method.empty()) sc.method = method_from_string(o.method);
  if (!o.topology.empty())
    sc.topology = o.topology == "flat" ? Topology::Flat : Topology::Hierarchical;
  if (o.duration > 0) sc.duration_s = o.duration;
  if (o.have_seed) sc.seed = o.seed;
  if (o.strict) sc.strict_validity = true;
  return sc;
}

int cmd_run(const CommonOpts& o) {
  Scenario sc = load_with_overrides(o);
  RunSummary sum = run_scenario(sc, o.out_dir);
  std::cout << sum.to_json(true) << "\n";
  if (sum.collapse) return kExitCollapse;
  if (sc.strict_validity && (sum.validity_failures || sum.agg_validity_failures))
    return kExitCollapse;
  return kExitOk;
}

int cmd_compare(const CommonOpts& o) {
  nlohmann::json table = nlohmann::json::array();
  double curtailed_commelec = -1;
  for (const char* m : {"commelec", "dp", "dps"}) {
    CommonOpts local = o;
    local.method = m;
    Scenario sc = load_with_overrides(local);
    RunSummary sum = run_scenario(sc, o.out_dir + "/" + m);
    nlohmann::json row = nlohmann::json::parse(sum.to_json(false));
    table.push_back(row);
    if (std::string(m) == "commelec") curtailed_commelec = sum.pv_curtailed_kwh;
    std::fprintf(stderr, "%-9s collapse=%d curtailed=%.2f kWh soc=(%.3f, %.3f)\n",
                 m, sum.collapse ? 1 : 0, sum.pv_curtailed_kwh,
                 sum.final_soc_slack, sum.final_soc_lv);
  }
  fs::create_directories(o.out_dir);
  std::ofstream out(o.out_dir + "/compare.json");
  out << table.dump(2) << "\n";
  std::cout << table.dump(2) << "\n";
  (void)curtailed_commelec;
  return kExitOk;
}

// One-step flat-vs-hierarchical equality on an ideal toy (exact Thevenin,
// strict PCC tracking, lossless wiring), plus the delta-approximation and
// belief-validity reports on the scenario.
int cmd_validate_aggregation(const CommonOpts& o) {
  nlohmann::json report;

  {  // ideal one-step toy
    CompositionCheck cc = ideal_composition_check();
    report["one_step"]["u_flat_kw"] = {cc.u_flat_kw.p, cc.u_flat_kw.q};
    report["one_step"]["u_hier_kw"] = {cc.u_hier_kw.p, cc.u_hier_kw.q};
    report["one_step"]["difference_kw"] = cc.difference_kw;
    report["one_step"]["pass"] = cc.difference_kw < 1e-6;
  }

  {  // delta approximation on a lossy 2-bus toy
    GridModel g;
    g.s_base_mva = 1.0;
    g.line_types["THEV"] = {0.142, 0.0415, 0.0, 1e6, 1e18};
    g.line_types["LV1"] = {0.284, 0.083, 0.0, 170.0, 4e4};
    g.buses = {{"VS", 0.4, true}, {"A", 0.4, false}, {"B", 0.4, false}};
    g.lines = {{"VS", "A", "THEV", 1.0}, {"A", "B", "LV1", 1.0}};
    Network net = Network::build(g);
    GAConfig cfg;
    cfg.role = GaRole::Internal;
    GridAgent ga(cfg, net, {{"dev", 2, 1.0}}, 0, false);
    Advertisement ad;
    ad.agent_id = "dev";
    ad.profile = PQProfile::interval_p(-10, 10);
    ad.belief = BeliefIdeal{};
    ad.cost = CostConstant{};
    GARoundInput in;
    in.ads = {ad};
    in.x_hat_kw = {{0, 0}};
    auto st = ga.solve(in.x_hat_kw, 1.0);
    in.state = *st;
    in.i_limit_pu.assign(2, std::numeric_limits<double>::infinity());
    AggregationConfig acfg;
    acfg.locality_radius_pu = 0.02;
    auto poly = sample_aggregate_pqt(ga, in, acfg);
    auto res = delta_approximation_check(ga, in, poly, 11);
    report["delta_check"]["delta_kw"] = res.delta;
    report["delta_check"]["worst_distance_kw"] = res.worst_distance;
    report["delta_check"]["pass"] = res.ok;
  }

  {  // belief-validity rate over a scenario run
    CommonOpts local = o;
    Scenario sc = load_with_overrides(local);
    sc.method = Method::Commelec;
    sc.topology = Topology::Hierarchical;
    if (o.duration <= 0) sc.duration_s = 120.0;
    RunSummary sum = run_scenario(sc, "");
    report["belief_validity"]["cycles"] = sum.ga_cycles;
    report["belief_validity"]["checks"] = sum.validity_checks;
    report["belief_validity"]["failures"] = sum.validity_failures;
    report["belief_validity"]["agg_checks"] = sum.agg_validity_checks;
    report["belief_validity"]["agg_failures"] = sum.agg_validity_failures;
    report["belief_validity"]["rate"] =
        sum.validity_checks
            ? 1.0 - double(sum.validity_failures) / sum.validity_checks
            : 1.0;
  }

  fs::create_directories(o.out_dir);
  std::ofstream out(o.out_dir + "/validate_aggregation.json");
  out << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  bool ok = report["one_step"]["pass"].get<bool>() &&
            report["delta_check"]["pass"].get<bool>() &&
            report["belief_validity"]["failures"].get<long>() == 0;
  return ok ? kExitOk : kExitCollapse;
}

int cmd_loadflow(const std::string& grid_path, const std::string& inj_path) {
  std::ifstream in(grid_path);
  if (!in.good()) {
    std::cerr << "cannot open grid file: " << grid_path << "\n";
    return kExitUsage;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  Network net = Network::build(grid_from_json(ss.str()));
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.bus_count());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(net.bus_count());
  if (!inj_path.empty()) {
    std::ifstream ij(inj_path);
    if (!ij.good()) {
      std::cerr << "cannot open injections file: " << inj_path << "\n";
      return kExitUsage;
    }
    nlohmann::json j = nlohmann::json::parse(ij);
    for (auto& [bus, pq] : j.items()) {
      int k = net.bus_index(bus);
      p(k) = pq.at(0).get<double>() / (net.s_base_mva() * 1000.0);
      q(k) = pq.at(1).get<double>() / (net.s_base_mva() * 1000.0);
    }
  }
  LoadFlowSolver solver(net);
  auto st = solver.solve(p, q, 1.0);
  if (!st) {
    std::cerr << "load flow did not converge\n";
    return kExitCollapse;
  }
  nlohmann::json out;
  for (int k = 0; k < net.bus_count(); ++k) {
    out["buses"][net.bus(k).id] = {{"v_pu", st->v_mag(k)},
                                   {"angle_rad", st->v_ang(k)}};
  }
  for (int l = 0; l < net.branch_count(); ++l) {
    const auto& br = net.branch(l);
    out["branches"].push_back(
        {{"from", net.bus(br.from).id},
         {"to", net.bus(br.to).id},
         {"i_a", st->i_line(l) * br.i_base_a},
         {"ampacity_a", br.ampacity_a}});
  }
  out["slack_p_kw"] = st->slack_p * net.s_base_mva() * 1000.0;
  out["slack_q_kvar"] = st->slack_q * net.s_base_mva() * 1000.0;
  out["loss_p_kw"] = st->loss_p * net.s_base_mva() * 1000.0;
  out["iterations"] = st->iterations;
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  std::ifstream in(dir + "/summary.json");
  if (!in.good()) {
    std::cerr << "no summary.json under " << dir << "\n";
    return kExitUsage;
  }
  nlohmann::json j = nlohmann::json::parse(in);
  std::printf("method      : %s (%s)\n", j["method"].get<std::string>().c_str(),
              j["topology"].get<std::string>().c_str());
  std::printf("duration    : %.1f s   collapse: %s (t=%.1f s)\n",
              j["duration_s"].get<double>(),
              j["collapse"].get<bool>() ? "yes" : "no",
              j["collapse_t_s"].get<double>());
  std::printf("soc         : slack %.3f, lv %.3f\n",
              j["final_soc_slack"].get<double>(),
              j["final_soc_lv"].get<double>());
  std::printf("pv energy   : avail %.2f kWh, produced %.2f kWh, curtailed %.2f kWh\n",
              j["pv_available_kwh"].get<double>(),
              j["pv_produced_kwh"].get<double>(),
              j["pv_curtailed_kwh"].get<double>());
  std::printf("voltage     : [%.4f, %.4f] pu, worst current ratio %.3f\n",
              j["v_min"].get<double>(), j["v_max"].get<double>(),
              j["worst_current_ratio"].get<double>());
  std::printf("violations  : %ld safety, %ld/%ld validity, %ld/%ld aggregated\n",
              j["safety_violations"].get<long>(),
              j["validity_failures"].get<long>(),
              j["validity_checks"].get<long>(),
              j["agg_validity_failures"].get<long>(),
              j["agg_validity_checks"].get<long>());
  if (j.contains("timing"))
    std::printf("cycle wall  : median %.2f ms, max %.2f ms\n",
                j["timing"]["ga_wall_ms_median"].get<double>(),
                j["timing"]["ga_wall_ms_max"].get<double>());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale microgrid control simulator"};
  app.require_subcommand(1);

  CommonOpts o;
  auto add_common = [&](CLI::App* cmd, bool need_scenario = true) {
    auto* s = cmd->add_option("--scenario", o.scenario, "scenario JSON file");
    if (need_scenario) s->required()->check(CLI::ExistingFile);
    cmd->add_option("--method", o.method, "commelec | dp | dps")
        ->check(CLI::IsMember({"commelec", "dp", "dps"}));
    cmd->add_option("--topology", o.topology, "hierarchical | flat")
        ->check(CLI::IsMember({"hierarchical", "flat"}));
    cmd->add_option("--duration", o.duration, "override duration (s)");
    cmd->add_option("--seed", o.seed, "override seed")
        ->each([&](const std::string&) { o.have_seed = true; });
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_flag("--strict", o.strict, "abort on any validity violation");
  };

  auto* run = app.add_subcommand("run", "run one scenario");
  add_common(run);
  auto* cmp = app.add_subcommand("compare", "run commelec, dp and dps");
  add_common(cmp);
  auto* val = app.add_subcommand("validate-aggregation",
                                 "composability and aggregation checks");
  add_common(val);
  std::string grid_path, inj_path, report_dir;
  auto* lf = app.add_subcommand("loadflow", "standalone load flow");
  lf->add_option("--grid", grid_path, "grid JSON file")->required();
  lf->add_option("--injections", inj_path, "bus->[P_kw,Q_kvar] JSON");
  auto* rep = app.add_subcommand("report", "summarize a run directory");
  rep->add_option("--dir", report_dir, "run output directory")->required();

  if (const char* env = std::getenv("COMMELEC_OUT_DIR")) o.out_dir = env;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitUsage : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (cmp->parsed()) return cmd_compare(o);
    if (val->parsed()) return cmd_validate_aggregation(o);
    if (lf->parsed()) return cmd_loadflow(grid_path, inj_path);
    if (rep->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
