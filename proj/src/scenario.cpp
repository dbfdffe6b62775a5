#include "commelec/scenario.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace commelec {

using nlohmann::json;

Method method_from_string(const std::string& s) {
  if (s == "commelec") return Method::Commelec;
  if (s == "dp") return Method::Dp;
  if (s == "dps") return Method::Dps;
  throw ParseError("unknown method: " + s);
}

std::string method_to_string(Method m) {
  switch (m) {
    case Method::Commelec: return "commelec";
    case Method::Dp: return "dp";
    default: return "dps";
  }
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GAConfig ga_config(const json& j, GaRole role) {
  GAConfig c;
  c.role = role;
  c.alpha = j.value("alpha", c.alpha);
  c.w0 = j.value("w0", c.w0);
  c.beta = j.value("beta", c.beta);
  c.g_max = j.value("g_max", c.g_max);
  c.step_clip_pu = j.value("step_clip_pu", c.step_clip_pu);
  c.n_dirs = j.value("n_dirs", c.n_dirs);
  c.proj_iter_cap = j.value("proj_iter_cap", c.proj_iter_cap);
  c.vertex_cap = j.value("vertex_cap", c.vertex_cap);
  c.strict_tracking = j.value("strict_tracking", false);
  return c;
}

DroopParams droop_params(const json& j, double rating) {
  DroopParams d;
  d.f0_hz = j.value("f0_hz", 50.0);
  d.p0_frac = j.value("p0", 0.0);
  d.m_f = j.value("m_f", -0.5);
  d.v0_pu = j.value("v0", 1.0);
  d.q0_frac = j.value("q0", 0.0);
  d.m_v = j.value("m_v", -0.04);
  d.rating_kva = rating;
  return d;
}

AgentSpec parse_agent(const json& a) {
  AgentSpec s;
  s.id = a.at("id").get<std::string>();
  s.type = a.at("type").get<std::string>();
  s.bus = a.at("bus").get<std::string>();
  s.ga = a.value("ga", std::string("mvga"));
  s.slack = a.value("slack", false);
  s.weight = a.value("weight", 1.0);
  const json p = a.value("params", json::object());
  if (s.type == "ess") {
    BatteryParams& b = s.battery;
    b.rated_kva = p.value("rated_kva", 30.0);
    b.rated_kwh = p.value("rated_kwh", 30.0);
    b.conv = {b.rated_kva, 0.0, false, p.value("eta", 0.97)};
    b.soc_target = p.value("soc_target", 0.5);
    b.v_nom = p.value("v_nom", 600.0);
    b.v_min = p.value("v_min", 0.85 * b.v_nom);
    b.v_max = p.value("v_max", 1.15 * b.v_nom);
    // pack resistance scaled for ~2.5% sag at rated current
    const double r0_default = 0.025 * b.v_nom * b.v_nom / (b.rated_kva * 1000.0);
    b.r0_ohm = p.value("r0_ohm", r0_default);
    b.r1_ohm = p.value("r1_ohm", 0.4 * b.r0_ohm);
    b.r2_ohm = p.value("r2_ohm", 0.3 * b.r0_ohm);
    b.i_max_a = p.value("i_max_a", 1.2 * b.rated_kva * 1000.0 / b.v_nom);
    b.i_min_a = p.value("i_min_a", -b.i_max_a);
    b.cost_k = p.value("cost_k", 1.0);
    b.cost_a = p.value("cost_a", 1.0);
    b.cost_b = p.value("cost_b", 0.2);
    b.cost_c = p.value("cost_c", 1.0);
    s.initial_soc = p.value("soc0", 0.5);
  } else if (s.type == "pv") {
    PvParams& v = s.pv;
    v.rated_kw = p.value("rated_kw", 10.0);
    v.conv = {p.value("s_rated_kva", v.rated_kw), p.value("cos_min", 0.8),
              true, p.value("eta", 1.0)};
    v.cost_a = p.value("cost_a", 0.05);
    v.cost_b = p.value("cost_b", 1e-3);
    v.drop_frac = p.value("drop_frac", 0.20);
    v.drop_window_s = p.value("drop_window_s", 60.0);
  } else if (s.type == "sg") {
    SgParams& g = s.sg;
    g.rated_kva = p.value("rated_kva", 250.0);
    g.p_min_frac = p.value("p_min", 0.2);
    g.p_max_frac = p.value("p_max", 1.0);
    g.x_s_pu = p.value("x_s_pu", 3.07);
    g.x_t_pu = p.value("x_t_pu", 0.1);
    g.e_max_pu = p.value("e_max_pu", 3.6);
    g.via_converter = p.value("via_converter", false);
    g.cost_a = p.value("cost_a", 1e-3);
  } else if (s.type == "boiler") {
    BoilerParams& b = s.boiler;
    b.p_max_kw = p.value("p_max_kw", 50.0);
    b.e_min_kwh = p.value("e_min_kwh", 1.0);
    b.e_margin_min_kwh = p.value("e_margin_min_kwh", 2.0);
    b.e_margin_max_kwh = p.value("e_margin_max_kwh", 19.0);
    b.e_max_kwh = p.value("e_max_kwh", 20.0);
    b.e_target_kwh = p.value("e_target_kwh", 10.0);
    b.cost_k = p.value("cost_k", 1.0);
    s.initial_kwh = p.value("e0_kwh", 2.5);
    s.profile_csv = p.value("demand_csv", std::string());
    s.demand_band_kw = p.value("demand_band_kw", 0.0);
  } else if (s.type == "ul") {
    s.ul.rho_max_kva = p.value("rho_max_kva", 15.0);
    s.profile_csv = p.value("profile_csv", std::string());
  } else {
    throw ParseError("unknown agent type: " + s.type);
  }
  if (a.contains("droop"))
    s.droop = droop_params(a.at("droop"), [&] {
      if (s.type == "ess") return s.battery.rated_kva;
      if (s.type == "pv") return s.pv.rated_kw;
      if (s.type == "sg") return s.sg.rated_kva;
      return 0.0;
    }());
  return s;
}

}  // namespace

Scenario scenario_from_json(const std::string& text,
                            const std::string& base_dir) {
  json j = json::parse(text);
  Scenario sc;
  sc.base_dir = base_dir;
  sc.name = j.value("name", std::string("scenario"));
  const std::string grid_file = j.at("grid_file").get<std::string>();
  sc.grid = grid_from_json(read_file(base_dir + "/" + grid_file));
  sc.method = method_from_string(j.value("method", std::string("commelec")));
  sc.topology = j.value("topology", std::string("hierarchical")) == "flat"
                    ? Topology::Flat
                    : Topology::Hierarchical;
  sc.duration_s = j.value("duration_s", 100.0);
  sc.seed = j.value("seed", 1ull);
  sc.strict_validity = j.value("strict_validity", true);
  if (j.contains("timing")) {
    const auto& t = j.at("timing");
    sc.timing.ga_cycle_s = t.value("ga_cycle_s", 0.1);
    sc.timing.measurement_s = t.value("measurement_s", 0.02);
    sc.timing.physics_s = t.value("physics_s", 0.01);
    sc.timing.message_delay_s = t.value("message_delay_s", 0.0);
  }
  const json ga = j.value("ga", json::object());
  sc.lvga = ga_config(ga.value("lvga", json::object()), GaRole::Internal);
  sc.mvga = ga_config(ga.value("mvga", json::object()), GaRole::Root);
  sc.flat = ga_config(ga.value("flat", json::object()), GaRole::Root);
  sc.flat_lv_weight_scale =
      ga.value("flat", json::object()).value("lv_weight_scale", 1.0);
  sc.mvga_aggregate_weight =
      ga.value("mvga", json::object()).value("aggregate_weight", 1.0);
  if (j.contains("aggregation")) {
    const auto& a = j.at("aggregation");
    sc.aggregation.m_samples = a.value("m_samples", 100);
    sc.aggregation.belief_grid = a.value("belief_grid", 5);
    sc.aggregation.cost_grid = a.value("cost_grid", 4);
    sc.aggregation.locality_radius_pu = a.value("locality_radius_pu", 0.02);
    sc.loss_bound_samples = a.value("loss_bound_samples", 2000);
    sc.loss_margin_frac = a.value("loss_margin_frac", 0.05);
    sc.loss_margin_kw = a.value("loss_margin_kw", 0.05);
  }
  if (j.contains("ampacity")) {
    sc.ampacity.headroom = j.at("ampacity").value("headroom", 1.3);
    sc.ampacity.protect_horizon_s =
        j.at("ampacity").value("protect_horizon_s", 5.0);
  }
  sc.droop_t_i_s = j.value("droop", json::object()).value("t_i_s", 50.0);
  if (j.contains("profiles")) {
    const auto& p = j.at("profiles");
    sc.irradiance_csv = p.value("irradiance_csv", std::string());
    if (!sc.irradiance_csv.empty())
      sc.irradiance_csv = base_dir + "/" + sc.irradiance_csv;
    if (p.contains("irradiance")) {
      const auto& ir = p.at("irradiance");
      sc.irradiance.base_w_m2 = ir.value("base_w_m2", 900.0);
      sc.irradiance.base_swing = ir.value("base_swing", 0.15);
      sc.irradiance.cloudy_factor = ir.value("cloudy_factor", 0.3);
      sc.irradiance.mean_dwell_s = ir.value("mean_dwell_s", 30.0);
      sc.irradiance.ramp_s = ir.value("ramp_s", 2.0);
    }
  }
  for (const auto& a : j.at("agents")) {
    AgentSpec s = parse_agent(a);
    if (!s.profile_csv.empty()) s.profile_csv = base_dir + "/" + s.profile_csv;
    sc.agents.push_back(std::move(s));
  }
  if (j.contains("events")) {
    for (const auto& e : j.at("events")) {
      ScenarioEvent ev;
      ev.t_s = e.at("t_s").get<double>();
      ev.disconnect = e.value("disconnect", std::string());
      sc.events.push_back(ev);
    }
  }
  return sc;
}

Scenario scenario_from_file(const std::string& path) {
  std::string dir = ".";
  auto slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash);
  return scenario_from_json(read_file(path), dir);
}

}  // namespace commelec
