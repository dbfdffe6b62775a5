#include "commelec/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "commelec/message.hpp"
#include "json.hpp"

namespace commelec {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

class CsvFile {
 public:
  CsvFile() = default;
  void open(const std::string& path, const std::vector<std::string>& header) {
    f_.open(path);
    for (size_t i = 0; i < header.size(); ++i)
      f_ << (i ? "," : "") << header[i];
    f_ << "\n";
  }
  void row(const std::vector<double>& vals) {
    if (!f_.is_open()) return;
    for (size_t i = 0; i < vals.size(); ++i)
      f_ << (i ? "," : "") << fmt(vals[i]);
    f_ << "\n";
  }
  std::ofstream f_;
};

}  // namespace

void MessageBus::dispatch(const std::string& from, const std::string& to,
                          std::vector<std::uint8_t> bytes,
                          std::int64_t now_us) {
  if (!known_.count(to))
    throw std::runtime_error("dispatch to unknown recipient: " + to);
  (void)from;
  queues_[to].push_back({now_us + delay_us_, seq_++, std::move(bytes)});
}

std::vector<std::vector<std::uint8_t>> MessageBus::collect(
    const std::string& to, std::int64_t now_us) {
  std::vector<std::vector<std::uint8_t>> out;
  auto it = queues_.find(to);
  if (it == queues_.end()) return out;
  auto& q = it->second;
  std::stable_sort(q.begin(), q.end(), [](const Item& a, const Item& b) {
    return a.deliver_us != b.deliver_us ? a.deliver_us < b.deliver_us
                                        : a.seq < b.seq;
  });
  size_t kept = 0;
  for (size_t i = 0; i < q.size(); ++i) {
    if (q[i].deliver_us <= now_us) {
      out.push_back(std::move(q[i].bytes));
    } else {
      if (kept != i) q[kept] = std::move(q[i]);
      ++kept;
    }
  }
  q.resize(kept);
  return out;
}

namespace {

// one physical resource plus its protocol bookkeeping
struct DeviceRt {
  AgentSpec spec;
  int plant_bus{-1};
  std::unique_ptr<EssAgent> ess;
  std::unique_ptr<PvAgent> pv;
  std::unique_ptr<SgAgent> sg;
  std::unique_ptr<BoilerAgent> boiler;
  std::unique_ptr<UlAgent> ul;
  TimeSeries ul_q;
  TimeSeries boiler_demand;
  double demand_band_kw{0};
  bool disconnected{false};

  // validity audit state: the advertisement the current target was accepted
  // against, and the accepted target
  Advertisement audit_ad;
  PQ audit_target{};
  bool audit_active{false};

  PQ actual(double t_s) const {
    if (disconnected) return {0, 0};
    if (ess) return ess->actual();
    if (pv) return pv->actual();
    if (sg) return sg->actual();
    if (boiler) return boiler->actual();
    return ul->actual(t_s);
  }

  Advertisement advertise(std::int64_t t_us, double t_s, double horizon_s) {
    if (ess) return ess->make_advertisement(t_us);
    if (pv) return pv->make_advertisement(t_us);
    if (sg) return sg->make_advertisement(t_us);
    if (boiler) {
      const double demand = boiler_demand.at(t_s);
      boiler->set_demand_forecast(std::max(0.0, demand - demand_band_kw),
                                  demand + demand_band_kw);
      return boiler->make_advertisement(t_us, horizon_s);
    }
    return ul->make_advertisement(t_us, t_s);
  }

  void apply(const PQ& request) {
    if (ess) ess->apply_request(request);
    if (pv) pv->apply_request(request);
    if (sg) sg->apply_request(request);
    if (boiler) boiler->apply_request(request);
    // uncontrollable loads ignore requests
  }

  void disconnect() {
    disconnected = true;
    audit_active = false;
    if (ess) ess->disconnect();
    if (pv) pv->disconnect();
    if (sg) sg->disconnect();
    if (boiler) boiler->disconnect();
    if (ul) ul->disconnect();
  }
};

struct GaView {
  std::unique_ptr<Network> net;
  std::unique_ptr<GridAgent> ga;
  std::vector<int> follower_device;    // index into devices_, -1 = aggregate
  std::vector<int> branch_to_plant;    // -1 = synthetic (thevenin)
  std::complex<double> z_thev{0, 0};
  int pcc_view_bus{-1};

  // measurement snapshot
  std::vector<PQ> x_hat;
  ElectricalState state;
  double v_slack{1.0};
  bool state_ok{false};
};

class Engine {
 public:
  Engine(const Scenario& sc, std::string out_dir)
      : sc_(sc), out_dir_(std::move(out_dir)),
        plant_(Network::build(sc.grid)), solver_(plant_),
        bus_(static_cast<std::int64_t>(sc.timing.message_delay_s * 1e6)) {}

  RunSummary run();

 private:
  const Scenario& sc_;
  std::string out_dir_;
  Network plant_;
  LoadFlowSolver solver_;
  MessageBus bus_;
  std::vector<DeviceRt> devices_;
  int slack_dev_{-1};
  int trafo_branch_{-1};
  TimeSeries irradiance_;

  ElectricalState state_;
  bool state_ok_{false};
  std::vector<DynamicAmpacity> amp_;
  std::vector<double> plant_limit_pu_;

  GaView lv_, mv_, flat_;
  HullCertCache lv_cert_;
  LossBounds lv_lb_;
  AggregationOutcome agg_;
  bool agg_valid_{false};
  Box agg_audit_rect_{};
  bool agg_audit_active_{false};
  std::map<std::string, Advertisement> lv_ads_, mv_ads_;
  PQ lv_leader_request_{};
  bool lv_have_request_{false};

  std::unique_ptr<DroopSolver> droop_;
  double f_now_{50.0};
  bool strict_abort_{false};

  RunSummary sum_;
  std::vector<double> cycle_ms_;
  CsvFile csv_voltages_, csv_currents_, csv_storage_, csv_pv_, csv_freq_,
      csv_pcc_, csv_devices_, csv_cycles_;

  long cycle_index_{0};

  void setup();
  void setup_views();
  void setup_outputs();
  void process_events(double t_s);
  bool refresh_state(double t_s);
  void safety_check(double t_s);
  void validity_audit(double t_s);
  void measure(double t_s);
  void commelec_cycle(std::int64_t t_us, double t_s);
  void droop_step(double t_s);
  void integrate(double t_s, double dt_s);
  void metrics_row(double t_s, double wall_ms);
  void finalize();
  std::vector<double> view_limits(const GaView& v) const;
  PQ lv_export_kw() const;  // subsystem export at the PCC, from plant truth
  GARoundInput make_input(GaView& v, const std::vector<Advertisement>& ads,
                          std::uint64_t seed) const;
};

void Engine::setup() {
  for (const auto& a : sc_.agents) {
    DeviceRt d;
    d.spec = a;
    d.plant_bus = plant_.bus_index(a.bus);
    if (a.type == "ess") {
      d.ess = std::make_unique<EssAgent>(a.id, a.battery, a.initial_soc);
      if (a.slack) slack_dev_ = static_cast<int>(devices_.size());
    } else if (a.type == "pv") {
      d.pv = std::make_unique<PvAgent>(a.id, a.pv);
    } else if (a.type == "sg") {
      d.sg = std::make_unique<SgAgent>(a.id, a.sg);
    } else if (a.type == "boiler") {
      d.boiler = std::make_unique<BoilerAgent>(a.id, a.boiler, a.initial_kwh);
      d.boiler_demand = a.profile_csv.empty()
                            ? TimeSeries::constant(0.0)
                            : load_csv_series(a.profile_csv);
      d.demand_band_kw = a.demand_band_kw;
    } else {
      TimeSeries p = a.profile_csv.empty() ? TimeSeries::constant(0.0)
                                           : load_csv_series(a.profile_csv);
      d.ul = std::make_unique<UlAgent>(a.id, a.ul, p, TimeSeries::constant(0.0));
    }
    devices_.push_back(std::move(d));
  }
  if (slack_dev_ < 0) throw ParseError("no slack storage agent in scenario");
  if (devices_[slack_dev_].plant_bus != plant_.slack_bus())
    throw ParseError("slack agent must sit at the slack bus");

  irradiance_ = sc_.irradiance_csv.empty()
                    ? synth_irradiance(sc_.seed, [&] {
                        IrradianceParams p = sc_.irradiance;
                        p.duration_s = sc_.duration_s + 10.0;
                        return p;
                      }())
                    : load_csv_series(sc_.irradiance_csv);

  amp_.resize(plant_.branch_count());
  plant_limit_pu_.resize(plant_.branch_count());
  for (int l = 0; l < plant_.branch_count(); ++l) {
    const auto& br = plant_.branch(l);
    amp_[l] = {0.0, sc_.ampacity.headroom * br.ampacity_a};
    plant_limit_pu_[l] = amp_[l].limit_a / br.i_base_a;
  }
  if (!sc_.grid.transformers.empty())
    trafo_branch_ = static_cast<int>(sc_.grid.lines.size());

  for (const auto& d : devices_) bus_.register_endpoint(d.spec.id);
  bus_.register_endpoint("lvga");
  bus_.register_endpoint("mvga");

  if (sc_.method == Method::Commelec) {
    setup_views();
  } else {
    DroopParams slack_par;
    if (devices_[slack_dev_].spec.droop) slack_par = *devices_[slack_dev_].spec.droop;
    slack_par.rating_kva = devices_[slack_dev_].spec.battery.rated_kva;
    droop_ = std::make_unique<DroopSolver>(plant_, slack_par, sc_.droop_t_i_s);
  }
}

void Engine::setup_views() {
  auto find_device = [&](const std::string& ga_name) {
    std::vector<int> out;
    for (size_t i = 0; i < devices_.size(); ++i)
      if (devices_[i].spec.ga == ga_name && !devices_[i].spec.slack)
        out.push_back(static_cast<int>(i));
    return out;
  };

  if (sc_.topology == Topology::Flat) {
    flat_.net = std::make_unique<Network>(Network::build(sc_.grid));
    std::vector<FollowerRef> followers;
    std::vector<int> fmap;
    for (size_t i = 0; i < devices_.size(); ++i) {
      const auto& d = devices_[i];
      if (d.spec.slack) continue;
      double w = d.spec.weight;
      if (d.spec.ga == "lvga") w *= sc_.flat_lv_weight_scale;
      followers.push_back({d.spec.id, flat_.net->bus_index(d.spec.bus), w});
      fmap.push_back(static_cast<int>(i));
    }
    flat_.ga = std::make_unique<GridAgent>(sc_.flat, *flat_.net, followers);
    flat_.follower_device = fmap;
    flat_.branch_to_plant.resize(flat_.net->branch_count());
    for (int l = 0; l < flat_.net->branch_count(); ++l)
      flat_.branch_to_plant[l] = l;
    flat_.x_hat.resize(followers.size());
    return;
  }

  if (sc_.grid.transformers.size() != 1)
    throw ParseError("hierarchical topology expects exactly one transformer");
  const auto& tr = sc_.grid.transformers[0];

  // split buses at the transformer
  std::set<std::string> lv_buses;
  {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& l : sc_.grid.lines) {
      adj[l.from].push_back(l.to);
      adj[l.to].push_back(l.from);
    }
    std::vector<std::string> stack{tr.to};
    lv_buses.insert(tr.to);
    while (!stack.empty()) {
      std::string u = stack.back();
      stack.pop_back();
      for (const auto& v : adj[u])
        if (lv_buses.insert(v).second) stack.push_back(v);
    }
  }

  // MV view: everything on the primary side; the LV subsystem appears as an
  // injection at the transformer primary bus.
  GridModel mv_model;
  mv_model.s_base_mva = sc_.grid.s_base_mva;
  mv_model.line_types = sc_.grid.line_types;
  for (const auto& b : sc_.grid.buses)
    if (!lv_buses.count(b.id)) mv_model.buses.push_back(b);
  std::vector<int> mv_branch_map;
  for (size_t i = 0; i < sc_.grid.lines.size(); ++i) {
    const auto& l = sc_.grid.lines[i];
    if (!lv_buses.count(l.from) && !lv_buses.count(l.to)) {
      mv_model.lines.push_back(l);
      mv_branch_map.push_back(static_cast<int>(i));
    }
  }
  mv_.net = std::make_unique<Network>(Network::build(mv_model));
  mv_.branch_to_plant = mv_branch_map;
  mv_.pcc_view_bus = mv_.net->bus_index(tr.from);

  // LV view: virtual slack behind the Thevenin impedance of the MV path.
  std::complex<double> z_th =
      mv_.net->thevenin_equivalent(mv_.pcc_view_bus);  // pu
  GridModel lv_model;
  lv_model.s_base_mva = sc_.grid.s_base_mva;
  lv_model.line_types = sc_.grid.line_types;
  const double z_base_mv = tr.primary_kv * tr.primary_kv / sc_.grid.s_base_mva;
  LineType thev_type;
  thev_type.r_ohm_per_km = std::max(z_th.real(), 1e-9) * z_base_mv;
  thev_type.x_ohm_per_km = std::max(z_th.imag(), 1e-9) * z_base_mv;
  thev_type.ampacity_a = 1e9;
  thev_type.specific_energy_a2s = 1e18;
  lv_model.line_types["_thev"] = thev_type;
  lv_model.buses.push_back({"_vs", tr.primary_kv, true});
  for (const auto& b : sc_.grid.buses)
    if (lv_buses.count(b.id) || b.id == tr.from) {
      BusSpec bb = b;
      bb.slack = false;
      lv_model.buses.push_back(bb);
    }
  lv_model.lines.push_back({"_vs", tr.from, "_thev", 1.0});
  std::vector<int> lv_branch_map{-1};
  for (size_t i = 0; i < sc_.grid.lines.size(); ++i) {
    const auto& l = sc_.grid.lines[i];
    if (lv_buses.count(l.from) && lv_buses.count(l.to)) {
      lv_model.lines.push_back(l);
      lv_branch_map.push_back(static_cast<int>(i));
    }
  }
  lv_model.transformers.push_back(tr);
  lv_branch_map.push_back(trafo_branch_);
  lv_.net = std::make_unique<Network>(Network::build(lv_model));
  lv_.branch_to_plant = lv_branch_map;
  lv_.z_thev = z_th;

  std::vector<FollowerRef> lv_followers;
  for (int di : find_device("lvga")) {
    lv_followers.push_back({devices_[di].spec.id,
                            lv_.net->bus_index(devices_[di].spec.bus),
                            devices_[di].spec.weight});
    lv_.follower_device.push_back(di);
  }
  lv_.ga = std::make_unique<GridAgent>(sc_.lvga, *lv_.net, lv_followers,
                                       /*pcc_branch=*/0,
                                       /*pcc_at_from_end=*/false);
  lv_.x_hat.resize(lv_followers.size());

  std::vector<FollowerRef> mv_followers;
  for (int di : find_device("mvga")) {
    mv_followers.push_back({devices_[di].spec.id,
                            mv_.net->bus_index(devices_[di].spec.bus),
                            devices_[di].spec.weight});
    mv_.follower_device.push_back(di);
  }
  mv_followers.push_back({"lvga", mv_.pcc_view_bus, sc_.mvga_aggregate_weight});
  mv_.follower_device.push_back(-1);
  mv_.ga = std::make_unique<GridAgent>(sc_.mvga, *mv_.net, mv_followers);
  mv_.x_hat.resize(mv_followers.size());
}

void Engine::setup_outputs() {
  if (out_dir_.empty()) return;
  std::filesystem::create_directories(out_dir_);
  csv_voltages_.open(out_dir_ + "/voltages.csv",
                     {"t_s", "lv_min", "lv_med", "lv_max", "mv_min", "mv_med",
                      "mv_max"});
  csv_currents_.open(out_dir_ + "/currents.csv",
                     {"t_s", "lv_max_ratio", "mv_max_ratio", "worst_ratio"});
  std::vector<std::string> sh{"t_s"};
  for (const auto& d : devices_)
    if (d.ess) sh.push_back("soc_" + d.spec.id);
  for (const auto& d : devices_)
    if (d.boiler) sh.push_back("kwh_" + d.spec.id);
  csv_storage_.open(out_dir_ + "/storage.csv", sh);
  std::vector<std::string> ph{"t_s", "avail_kw", "produced_kw", "curtailed_kwh"};
  for (const auto& d : devices_)
    if (d.pv) ph.push_back("p_" + d.spec.id);
  csv_pv_.open(out_dir_ + "/pv.csv", ph);
  csv_freq_.open(out_dir_ + "/frequency.csv", {"t_s", "f_hz"});
  csv_pcc_.open(out_dir_ + "/pcc.csv",
                {"t_s", "slack_p_kw", "slack_q_kvar", "lv_export_p_kw",
                 "lv_export_q_kvar"});
  std::vector<std::string> dh{"t_s"};
  for (const auto& d : devices_) dh.push_back("p_" + d.spec.id);
  csv_devices_.open(out_dir_ + "/devices.csv", dh);
  csv_cycles_.open(out_dir_ + "/cycle_time.csv", {"t_s", "control_wall_ms"});
}

void Engine::process_events(double t_s) {
  for (const auto& e : sc_.events) {
    if (e.disconnect.empty()) continue;
    if (std::abs(e.t_s - t_s) < 0.5 * sc_.timing.physics_s) {
      for (auto& d : devices_)
        if (d.spec.id == e.disconnect) d.disconnect();
    }
  }
}

bool Engine::refresh_state(double t_s) {
  // two passes settle the voltage-dependent synchronous-machine projection
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(plant_.bus_count());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(plant_.bus_count());
    const double to_pu = 1.0 / (plant_.s_base_mva() * 1000.0);
    for (size_t i = 0; i < devices_.size(); ++i) {
      if (static_cast<int>(i) == slack_dev_) continue;
      PQ a = devices_[i].actual(t_s);
      p(devices_[i].plant_bus) += a.p * to_pu;
      q(devices_[i].plant_bus) += a.q * to_pu;
    }
    LoadFlowOptions opt;
    opt.warm = state_ok_ ? &state_ : nullptr;
    auto st = solver_.solve(p, q, 1.0, opt);
    if (!st) return false;
    state_ = *st;
    state_ok_ = true;
    for (auto& d : devices_)
      if (d.sg) d.sg->update_voltage(state_.v_mag(d.plant_bus));
  }
  // the slack converter realizes whatever the network demands
  if (!devices_[slack_dev_].disconnected) {
    const double kw = plant_.s_base_mva() * 1000.0;
    devices_[slack_dev_].ess->set_slack_actual(
        {state_.slack_p * kw, state_.slack_q * kw});
  }
  return true;
}

void Engine::safety_check(double) {
  for (int k = 0; k < plant_.bus_count(); ++k) {
    const double v = state_.v_mag(k);
    sum_.v_min = std::min(sum_.v_min, v);
    sum_.v_max = std::max(sum_.v_max, v);
    if (v < 0.9 - 1e-9 || v > 1.1 + 1e-9) ++sum_.safety_violations;
  }
  for (int l = 0; l < plant_.branch_count(); ++l) {
    const double ratio = state_.i_line(l) / plant_limit_pu_[l];
    sum_.worst_current_ratio = std::max(sum_.worst_current_ratio, ratio);
    if (ratio > 1.0 + 1e-9) ++sum_.safety_violations;
  }
}

void Engine::validity_audit(double t_s) {
  for (auto& d : devices_) {
    if (!d.audit_active || d.disconnected) continue;
    ++sum_.validity_checks;
    bool ok = set_member(belief_set(d.audit_ad.belief, d.audit_target),
                         d.actual(t_s), 1e-6);
    if (!ok) {
      ++sum_.validity_failures;
      if (sc_.strict_validity) strict_abort_ = true;  // terminates the run
    }
  }
  if (agg_audit_active_) {
    ++sum_.agg_validity_checks;
    if (!agg_audit_rect_.contains(lv_export_kw(), 1e-6)) {
      ++sum_.agg_validity_failures;
      if (sc_.strict_validity) strict_abort_ = true;
    }
  }
}

PQ Engine::lv_export_kw() const {
  if (trafo_branch_ < 0) return {0, 0};
  auto s = branch_flow(plant_, state_, trafo_branch_, /*at_from_end=*/true);
  const double kw = plant_.s_base_mva() * 1000.0;
  return {-s.real() * kw, -s.imag() * kw};
}

std::vector<double> Engine::view_limits(const GaView& v) const {
  std::vector<double> lim(v.net->branch_count());
  for (int l = 0; l < v.net->branch_count(); ++l) {
    int pl = v.branch_to_plant[l];
    lim[l] = pl < 0 ? std::numeric_limits<double>::infinity()
                    : plant_limit_pu_[pl];
  }
  return lim;
}

void Engine::measure(double t_s) {
  const double kw = plant_.s_base_mva() * 1000.0;
  if (sc_.topology == Topology::Flat) {
    for (size_t k = 0; k < flat_.follower_device.size(); ++k)
      flat_.x_hat[k] = devices_[flat_.follower_device[k]].actual(t_s);
    flat_.state = state_;
    flat_.v_slack = 1.0;
    flat_.state_ok = true;
    return;
  }
  // LV view: calibrate the virtual slack voltage so the model reproduces the
  // measured PCC voltage under the measured import.
  {
    const auto& tr = sc_.grid.transformers[0];
    const int m3 = plant_.bus_index(tr.from);
    const std::complex<double> v_m3 =
        std::polar(state_.v_mag(m3), state_.v_ang(m3));
    const std::complex<double> s_imp =
        branch_flow(plant_, state_, trafo_branch_, true);  // into the trafo
    const std::complex<double> i_in = std::conj(s_imp / v_m3);
    lv_.v_slack = std::abs(v_m3 + lv_.z_thev * i_in);
    for (size_t k = 0; k < lv_.follower_device.size(); ++k)
      lv_.x_hat[k] = devices_[lv_.follower_device[k]].actual(t_s);
    auto st = lv_.ga->solve(lv_.x_hat, lv_.v_slack,
                            lv_.state_ok ? &lv_.state : nullptr);
    if (st) {
      lv_.state = *st;
      lv_.state_ok = true;
    }
  }
  {
    for (size_t k = 0; k < mv_.follower_device.size(); ++k) {
      int di = mv_.follower_device[k];
      mv_.x_hat[k] = di < 0 ? lv_export_kw() : devices_[di].actual(t_s);
    }
    auto st = mv_.ga->solve(mv_.x_hat, 1.0, mv_.state_ok ? &mv_.state : nullptr);
    if (st) {
      mv_.state = *st;
      mv_.state_ok = true;
    }
  }
  (void)kw;
}

GARoundInput Engine::make_input(GaView& v, const std::vector<Advertisement>& ads,
                                std::uint64_t seed) const {
  GARoundInput in;
  in.ads = ads;
  in.x_hat_kw = v.x_hat;
  in.state = v.state;
  in.v_slack = v.v_slack;
  in.i_limit_pu = view_limits(v);
  in.seed = seed;
  return in;
}

void Engine::commelec_cycle(std::int64_t t_us, double t_s) {
  const auto wall0 = std::chrono::steady_clock::now();
  const double horizon = sc_.timing.ga_cycle_s;

  // 1. resource advertisements
  for (auto& d : devices_) {
    Advertisement ad = d.advertise(t_us, t_s, horizon);
    const std::string leader =
        sc_.topology == Topology::Flat ? "mvga" : d.spec.ga;
    bus_.dispatch(d.spec.id, leader, encode_advertisement(ad), t_us);
  }

  auto inbox_ads = [&](const std::string& ga_id,
                       std::map<std::string, Advertisement>& store) {
    for (auto& bytes : bus_.collect(ga_id, t_us)) {
      Advertisement ad = decode_advertisement(bytes);
      store[ad.agent_id] = std::move(ad);
    }
  };

  if (sc_.topology == Topology::Hierarchical) {
    // 2. LV aggregation and upward advertisement
    inbox_ads("lvga", lv_ads_);
    bool lv_ready = lv_.state_ok;
    std::vector<Advertisement> lv_ad_list;
    for (size_t k = 0; k < lv_.follower_device.size() && lv_ready; ++k) {
      auto it = lv_ads_.find(devices_[lv_.follower_device[k]].spec.id);
      if (it == lv_ads_.end())
        lv_ready = false;
      else
        lv_ad_list.push_back(it->second);
    }
    if (!lv_ready) {
      ++cycle_index_;
      return;
    }
    GARoundInput lv_in =
        make_input(lv_, lv_ad_list, mix(sc_.seed, cycle_index_ * 4 + 1));
    GaMap f = [&](const PQ& u0, int idx,
                  const std::vector<Box>* hull) -> std::optional<std::vector<PQ>> {
      GARoundInput local = lv_in;
      local.leader_request_kw = u0;
      local.certified_hull = hull;
      local.seed = mix(sc_.seed, cycle_index_ * 1000 + 7 + idx);
      try {
        return lv_.ga->compute_setpoints(local).u_kw;
      } catch (const CapExceededError&) {
        return std::nullopt;
      }
    };
    AggregationConfig acfg = sc_.aggregation;
    acfg.cert_cache = &lv_cert_;
    try {
      agg_ = aggregate_subsystem(*lv_.ga, lv_in, acfg, lv_lb_, f);
      agg_valid_ = true;
    } catch (const CapExceededError&) {
      agg_valid_ = false;
    }
    if (agg_valid_) {
      if (agg_.degenerate) ++sum_.aggregation_degenerate_cycles;
      Advertisement up;
      up.agent_id = "lvga";
      up.timestamp_us = t_us;
      if (agg_.polygon_kw.size() == 1)
        up.profile = PQProfile::singleton(agg_.polygon_kw[0]);
      else
        up.profile = PQProfile::polygon(agg_.polygon_kw);
      up.belief = BeliefAggRect{agg_.partition, agg_.rects};
      up.cost = agg_.cost;
      bus_.dispatch("lvga", "mvga", encode_advertisement(up), t_us);
    }

    // 3. root decision
    inbox_ads("mvga", mv_ads_);
    bool mv_ready = true;
    std::vector<Advertisement> mv_ad_list;
    for (size_t k = 0; k < mv_.follower_device.size(); ++k) {
      int di = mv_.follower_device[k];
      const std::string id = di < 0 ? "lvga" : devices_[di].spec.id;
      if (!mv_ads_.count(id)) {
        mv_ready = false;
        break;
      }
      mv_ad_list.push_back(mv_ads_.at(id));
    }
    if (mv_ready && mv_.state_ok) {
      GARoundInput mv_in =
          make_input(mv_, mv_ad_list, mix(sc_.seed, cycle_index_ * 4 + 2));
      mv_in.slack_ad = mv_ads_.at(devices_[slack_dev_].spec.id);
      auto out = mv_.ga->compute_setpoints(mv_in);
      if (std::getenv("COMMELEC_DEBUG") && cycle_index_ % 50 == 0) {
        std::fprintf(stderr,
                     "[mv] t=%.1f grad=%.3g d0=%.3g iters=%d fb=%d lf=%d "
                     "xhat=(%.1f,%.1f,%.1f) u=(%.1f,%.1f,%.1f)\n",
                     t_s, out.diag.grad_norm, out.diag.delta_before,
                     out.diag.proj_iterations, out.diag.fallback ? 1 : 0,
                     out.diag.load_flows, mv_in.x_hat_kw[0].p,
                     mv_in.x_hat_kw[1].p, mv_in.x_hat_kw[2].p, out.u_kw[0].p,
                     out.u_kw[1].p, out.u_kw[2].p);
      }
      for (size_t k = 0; k < mv_.follower_device.size(); ++k) {
        int di = mv_.follower_device[k];
        const std::string to = di < 0 ? "lvga" : devices_[di].spec.id;
        Request rq{to, t_us, out.u_kw[k]};
        bus_.dispatch("mvga", to, encode_request(rq), t_us);
      }
    }

    // 4. internal decision: serve the representative of the leader request
    for (auto& bytes : bus_.collect("lvga", t_us)) {
      Request rq = decode_request(bytes);
      lv_leader_request_ = rq.setpoint;
      lv_have_request_ = true;
    }
    if (agg_valid_ && !agg_.partition.empty()) {
      PQ u0 = lv_have_request_ ? lv_leader_request_
                               : lv_export_kw();  // hold the current export
      if (std::getenv("COMMELEC_DEBUG") && cycle_index_ % 50 == 0) {
        Box pb = Box::at(agg_.polygon_kw[0]);
        for (const auto& v : agg_.polygon_kw) pb.include(v);
        std::fprintf(stderr,
                     "[dbg] t=%.1f export=%.1f req=(%.1f,%.1f) poly_p=[%.1f,%.1f] "
                     "reps=%zu samples=%d draws=%d\n",
                     t_s, lv_export_kw().p, u0.p, u0.q, pb.p_lo, pb.p_hi,
                     agg_.partition.size(), agg_.samples_accepted, agg_.draws);
      }
      // clamp into the advertised aggregated profile, then quantize
      if (agg_.polygon_kw.size() >= 3)
        u0 = polygon_project(agg_.polygon_kw, u0);
      else
        u0 = agg_.polygon_kw[0];
      int rep = nearest_representative(agg_.partition, u0);
      if (std::getenv("COMMELEC_DEBUG") && cycle_index_ % 50 == 0) {
        std::string reps;
        for (const auto& r : agg_.partition)
          reps += " (" + std::to_string((int)r.p) + "," + std::to_string((int)r.q) + ")";
        std::fprintf(stderr, "[dbg2] u0=(%.1f,%.1f) rep=%d reps:%s\n", u0.p,
                     u0.q, rep, reps.c_str());
      }
      const auto& u = agg_.f_at[rep];
      for (size_t k = 0; k < lv_.follower_device.size(); ++k) {
        const std::string to = devices_[lv_.follower_device[k]].spec.id;
        bus_.dispatch("lvga", to, encode_request(Request{to, t_us, u[k]}), t_us);
      }
      agg_audit_rect_ = agg_.rects[rep];
      agg_audit_active_ = true;
    }
  } else {
    // flat root decision over every resource
    inbox_ads("mvga", mv_ads_);
    bool ready = true;
    std::vector<Advertisement> ad_list;
    for (size_t k = 0; k < flat_.follower_device.size(); ++k) {
      const std::string& id = devices_[flat_.follower_device[k]].spec.id;
      if (!mv_ads_.count(id)) {
        ready = false;
        break;
      }
      ad_list.push_back(mv_ads_.at(id));
    }
    if (ready && flat_.state_ok) {
      GARoundInput in =
          make_input(flat_, ad_list, mix(sc_.seed, cycle_index_ * 4 + 3));
      in.slack_ad = mv_ads_.at(devices_[slack_dev_].spec.id);
      auto out = flat_.ga->compute_setpoints(in);
      for (size_t k = 0; k < flat_.follower_device.size(); ++k) {
        const std::string to = devices_[flat_.follower_device[k]].spec.id;
        bus_.dispatch("mvga", to, encode_request(Request{to, t_us, out.u_kw[k]}),
                      t_us);
      }
    }
  }

  // 5. implementation: followers apply the latest delivered request
  for (auto& d : devices_) {
    auto msgs = bus_.collect(d.spec.id, t_us);
    if (msgs.empty() || d.disconnected) continue;
    Request rq = decode_request(msgs.back());
    d.apply(rq.setpoint);
    // audit against the advertisement this request was computed from
    const auto& store =
        (sc_.topology == Topology::Hierarchical && d.spec.ga == "lvga")
            ? lv_ads_
            : mv_ads_;
    auto it = store.find(d.spec.id);
    if (it != store.end() && static_cast<int>(&d - devices_.data()) != slack_dev_) {
      d.audit_ad = it->second;
      d.audit_target = project_to_profile(d.audit_ad.profile, rq.setpoint);
      d.audit_active = true;
    }
  }

  const auto wall1 = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration<double, std::milli>(wall1 - wall0).count();
  cycle_ms_.push_back(ms);
  ++sum_.ga_cycles;
  metrics_row(t_s, ms);
  ++cycle_index_;
}

void Engine::droop_step(double t_s) {
  const auto wall0 = std::chrono::steady_clock::now();
  std::vector<DroopDevice> devs;
  std::vector<int> dev_index;
  std::vector<std::pair<int, PQ>> fixed;
  for (size_t i = 0; i < devices_.size(); ++i) {
    auto& d = devices_[i];
    if (static_cast<int>(i) == slack_dev_ || d.disconnected) continue;
    if (d.ul) {
      fixed.push_back({d.plant_bus, d.ul->actual(t_s)});
      continue;
    }
    if (d.boiler) {
      fixed.push_back({d.plant_bus, d.boiler->actual()});  // off under droop
      continue;
    }
    if (!d.spec.droop) continue;
    DroopDevice dd;
    dd.id = d.spec.id;
    dd.bus = d.plant_bus;
    dd.par = *d.spec.droop;
    if (d.pv) {
      PvAgent* pv = d.pv.get();
      dd.clamp = [pv](const PQ& want, double) {
        const auto& par = pv->params();
        double p = std::clamp(want.p, 0.0, pv->cap_kw());
        double s_r = par.conv.s_rated_kva;
        double qcap = std::sqrt(std::max(0.0, s_r * s_r - p * p));
        if (par.conv.cos_min > 0) {
          double t = std::sqrt(1 - par.conv.cos_min * par.conv.cos_min) /
                     par.conv.cos_min;
          qcap = std::min(qcap, t * p);
        }
        return PQ{p, std::clamp(want.q, -qcap, qcap)};
      };
    } else if (d.ess) {
      EssAgent* ess = d.ess.get();
      dd.clamp = [ess](const PQ& want, double) {
        return project_to_profile(ess->advertised_profile(), want);
      };
    } else if (d.sg) {
      SgAgent* sg = d.sg.get();
      dd.clamp = [sg](const PQ& want, double v) {
        return project_to_profile(
            sg_capability(sg->params(),
                          std::clamp(v, sg->params().v_min, sg->params().v_max)),
            want);
      };
    }
    devs.push_back(std::move(dd));
    dev_index.push_back(static_cast<int>(i));
  }
  // refresh storage bounds from the pack model
  for (size_t i = 0; i < devices_.size(); ++i)
    if (devices_[i].ess && static_cast<int>(i) != slack_dev_)
      devices_[i].ess->make_advertisement(0);

  auto res = droop_->step(devs, fixed, sc_.method == Method::Dps,
                          sc_.timing.ga_cycle_s,
                          state_ok_ ? &state_ : nullptr);
  if (!res.converged) {
    sum_.collapse = true;
    sum_.collapse_t_s = t_s;
    return;
  }
  f_now_ = res.f_hz;
  for (size_t k = 0; k < devs.size(); ++k) {
    auto& d = devices_[dev_index[k]];
    d.apply(res.device_kw[k]);
  }
  const auto wall1 = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration<double, std::milli>(wall1 - wall0).count();
  cycle_ms_.push_back(ms);
  ++sum_.ga_cycles;
  metrics_row(t_s, ms);
  ++cycle_index_;
}

void Engine::integrate(double t_s, double dt_s) {
  for (size_t i = 0; i < devices_.size(); ++i) {
    auto& d = devices_[i];
    if (d.disconnected) continue;
    if (d.ess) d.ess->physics_step(dt_s);
    if (d.boiler) d.boiler->physics_step(d.boiler_demand.at(t_s), dt_s);
    if (d.pv) {
      sum_.pv_available_kwh += d.pv->cap_kw() * dt_s / 3600.0;
      sum_.pv_produced_kwh += d.pv->actual().p * dt_s / 3600.0;
    }
  }
  for (int l = 0; l < plant_.branch_count(); ++l) {
    const auto& br = plant_.branch(l);
    amp_[l] = update_dynamic_ampacity(br.ampacity_a, br.specific_energy_a2s,
                                      amp_[l], state_.i_line(l) * br.i_base_a,
                                      dt_s, sc_.ampacity);
    plant_limit_pu_[l] = amp_[l].limit_a / br.i_base_a;
  }
  (void)t_s;
}

void Engine::metrics_row(double t_s, double wall_ms) {
  std::vector<double> lv_v, mv_v;
  for (int k = 0; k < plant_.bus_count(); ++k)
    (plant_.bus(k).base_kv < 1.0 ? lv_v : mv_v).push_back(state_.v_mag(k));
  auto stats = [](std::vector<double> v) -> std::array<double, 3> {
    if (v.empty()) return {0, 0, 0};
    std::sort(v.begin(), v.end());
    return {v.front(), v[v.size() / 2], v.back()};
  };
  auto lv_s = stats(lv_v), mv_s = stats(mv_v);
  csv_voltages_.row({t_s, lv_s[0], lv_s[1], lv_s[2], mv_s[0], mv_s[1], mv_s[2]});

  double lv_r = 0, mv_r = 0;
  for (int l = 0; l < plant_.branch_count(); ++l) {
    double ratio = state_.i_line(l) / plant_limit_pu_[l];
    if (plant_.bus(plant_.branch(l).from).base_kv < 1.0)
      lv_r = std::max(lv_r, ratio);
    else
      mv_r = std::max(mv_r, ratio);
  }
  csv_currents_.row({t_s, lv_r, mv_r, std::max(lv_r, mv_r)});

  std::vector<double> srow{t_s};
  for (const auto& d : devices_)
    if (d.ess) srow.push_back(d.ess->soc());
  for (const auto& d : devices_)
    if (d.boiler) srow.push_back(d.boiler->energy_kwh());
  csv_storage_.row(srow);

  double avail = 0, prod = 0;
  std::vector<double> prow;
  for (const auto& d : devices_)
    if (d.pv) {
      if (!d.disconnected) {
        avail += d.pv->cap_kw();
        prod += d.pv->actual().p;
      }
      prow.push_back(d.disconnected ? 0.0 : d.pv->actual().p);
    }
  std::vector<double> pv_row{
      t_s, avail, prod,
      std::max(0.0, sum_.pv_available_kwh - sum_.pv_produced_kwh)};
  pv_row.insert(pv_row.end(), prow.begin(), prow.end());
  csv_pv_.row(pv_row);

  csv_freq_.row({t_s, sc_.method == Method::Commelec ? 50.0 : f_now_});

  const double kw = plant_.s_base_mva() * 1000.0;
  PQ exp_kw = lv_export_kw();
  csv_pcc_.row({t_s, state_.slack_p * kw, state_.slack_q * kw, exp_kw.p,
                exp_kw.q});

  std::vector<double> drow{t_s};
  for (const auto& d : devices_) drow.push_back(d.actual(t_s).p);
  csv_devices_.row(drow);

  csv_cycles_.row({t_s, wall_ms});
}

void Engine::finalize() {
  sum_.method = method_to_string(sc_.method);
  sum_.topology = sc_.topology == Topology::Flat ? "flat" : "hierarchical";
  sum_.pv_curtailed_kwh =
      std::max(0.0, sum_.pv_available_kwh - sum_.pv_produced_kwh);
  for (const auto& d : devices_) {
    if (d.ess && d.spec.slack) sum_.final_soc_slack = d.ess->soc();
    if (d.ess && !d.spec.slack) sum_.final_soc_lv = d.ess->soc();
    if (d.boiler) sum_.boiler_kwh[d.spec.id] = d.boiler->energy_kwh();
  }
  if (!cycle_ms_.empty()) {
    std::vector<double> ms = cycle_ms_;
    std::sort(ms.begin(), ms.end());
    sum_.ga_wall_ms_median = ms[ms.size() / 2];
    sum_.ga_wall_ms_max = ms.back();
  }
  if (!out_dir_.empty()) {
    std::ofstream js(out_dir_ + "/summary.json");
    js << sum_.to_json(true) << "\n";
  }
}

RunSummary Engine::run() {
  setup();
  setup_outputs();

  const std::int64_t phys_us =
      static_cast<std::int64_t>(sc_.timing.physics_s * 1e6 + 0.5);
  const std::int64_t meas_us =
      static_cast<std::int64_t>(sc_.timing.measurement_s * 1e6 + 0.5);
  const std::int64_t ga_us =
      static_cast<std::int64_t>(sc_.timing.ga_cycle_s * 1e6 + 0.5);
  if (meas_us % phys_us != 0 || ga_us % meas_us != 0)
    throw ParseError("timing cadences must nest");
  const std::int64_t end_us =
      static_cast<std::int64_t>(sc_.duration_s * 1e6 + 0.5);

  // offline loss-bound estimation for the aggregation (widest profiles)
  if (sc_.method == Method::Commelec && sc_.topology == Topology::Hierarchical) {
    for (auto& d : devices_)
      if (d.pv) d.pv->update_irradiance(1000.0, -1.0);
    refresh_state(0.0);
    measure(0.0);
    std::vector<Advertisement> ads;
    for (size_t k = 0; k < lv_.follower_device.size(); ++k)
      ads.push_back(devices_[lv_.follower_device[k]].advertise(0, 0.0,
                                                               sc_.timing.ga_cycle_s));
    GARoundInput in = make_input(lv_, ads, mix(sc_.seed, 0xbeef));
    lv_lb_ = offline_loss_bounds(*lv_.ga, in, sc_.loss_bound_samples,
                                 mix(sc_.seed, 0x10553));
    // widened safety margins keep the advertised rectangles conservative
    const double span = lv_lb_.lp_max - lv_lb_.lp_min;
    lv_lb_.lp_max += sc_.loss_margin_frac * span + sc_.loss_margin_kw;
    lv_lb_.lp_min =
        std::max(0.0, lv_lb_.lp_min - sc_.loss_margin_frac * span -
                          sc_.loss_margin_kw);
    const double qspan = lv_lb_.lq_max - lv_lb_.lq_min;
    lv_lb_.lq_max += sc_.loss_margin_frac * qspan + sc_.loss_margin_kw;
    lv_lb_.lq_min -= sc_.loss_margin_frac * qspan + sc_.loss_margin_kw;
  }

  for (std::int64_t t_us = 0; t_us <= end_us; t_us += phys_us) {
    const double t_s = t_us * 1e-6;
    process_events(t_s);
    for (auto& d : devices_)
      if (d.pv && !d.disconnected)
        d.pv->update_irradiance(irradiance_.at(t_s), t_s);
    if (!refresh_state(t_s)) {
      sum_.collapse = true;
      sum_.collapse_t_s = t_s;
      break;
    }
    safety_check(t_s);
    validity_audit(t_s);
    if (strict_abort_) break;
    if (t_us % meas_us == 0 && sc_.method == Method::Commelec) measure(t_s);
    if (t_us % ga_us == 0) {
      if (sc_.method == Method::Commelec)
        commelec_cycle(t_us, t_s);
      else
        droop_step(t_s);
      if (sum_.collapse) break;
      if (!refresh_state(t_s)) {
        sum_.collapse = true;
        sum_.collapse_t_s = t_s;
        break;
      }
    }
    integrate(t_s, phys_us * 1e-6);
    if (devices_[slack_dev_].ess->tripped()) {
      sum_.collapse = true;
      sum_.collapse_t_s = t_s;
      break;
    }
    sum_.duration_s = t_s;
  }
  finalize();
  return sum_;
}

}  // namespace

std::string RunSummary::to_json(bool include_timing) const {
  nlohmann::json j;
  j["method"] = method;
  j["topology"] = topology;
  j["collapse"] = collapse;
  j["collapse_t_s"] = collapse_t_s;
  j["duration_s"] = duration_s;
  j["final_soc_slack"] = final_soc_slack;
  j["final_soc_lv"] = final_soc_lv;
  j["boiler_kwh"] = boiler_kwh;
  j["pv_available_kwh"] = pv_available_kwh;
  j["pv_produced_kwh"] = pv_produced_kwh;
  j["pv_curtailed_kwh"] = pv_curtailed_kwh;
  j["v_min"] = v_min;
  j["v_max"] = v_max;
  j["worst_current_ratio"] = worst_current_ratio;
  j["safety_violations"] = safety_violations;
  j["validity_checks"] = validity_checks;
  j["validity_failures"] = validity_failures;
  j["agg_validity_checks"] = agg_validity_checks;
  j["agg_validity_failures"] = agg_validity_failures;
  j["ga_cycles"] = ga_cycles;
  j["aggregation_degenerate_cycles"] = aggregation_degenerate_cycles;
  if (include_timing) {
    j["timing"]["ga_wall_ms_median"] = ga_wall_ms_median;
    j["timing"]["ga_wall_ms_max"] = ga_wall_ms_max;
  }
  return j.dump(2);
}

RunSummary run_scenario(const Scenario& sc, const std::string& out_dir) {
  Engine engine(sc, out_dir);
  return engine.run();
}

}  // namespace commelec
