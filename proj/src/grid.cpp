#include "commelec/grid.hpp"

#include <cmath>
#include <queue>

#include "json.hpp"

namespace commelec {

using nlohmann::json;

GridModel grid_from_json(const std::string& text) {
  json j = json::parse(text);
  GridModel g;
  g.s_base_mva = j.value("s_base_mva", 1.0);
  for (auto& [name, t] : j.at("line_types").items()) {
    LineType lt;
    lt.r_ohm_per_km = t.at("r_ohm_per_km").get<double>();
    lt.x_ohm_per_km = t.at("x_ohm_per_km").get<double>();
    lt.b_us_per_km = t.value("b_us_per_km", 0.0);
    lt.ampacity_a = t.at("ampacity_a").get<double>();
    lt.specific_energy_a2s = t.value("specific_energy_a2s", 4e4);
    g.line_types[name] = lt;
  }
  for (auto& b : j.at("buses")) {
    g.buses.push_back({b.at("id").get<std::string>(), b.at("kv").get<double>(),
                       b.value("slack", false)});
  }
  for (auto& l : j.at("lines")) {
    g.lines.push_back({l.at("from").get<std::string>(),
                       l.at("to").get<std::string>(),
                       l.at("type").get<std::string>(),
                       l.at("length_km").get<double>()});
  }
  if (j.contains("transformers")) {
    for (auto& t : j.at("transformers")) {
      TransformerSpec ts;
      ts.from = t.at("from").get<std::string>();
      ts.to = t.at("to").get<std::string>();
      ts.primary_kv = t.at("primary_kv").get<double>();
      ts.secondary_kv = t.at("secondary_kv").get<double>();
      ts.rated_kva = t.at("rated_kva").get<double>();
      ts.u_sc_pct = t.at("u_sc_pct").get<double>();
      ts.r_pct = t.value("r_pct", 0.0);
      g.transformers.push_back(ts);
    }
  }
  return g;
}

namespace {
double current_base_a(double s_base_mva, double kv) {
  return s_base_mva * 1e6 / (std::sqrt(3.0) * kv * 1e3);
}
}  // namespace

Network Network::build(const GridModel& model) {
  Network net;
  net.s_base_ = model.s_base_mva;
  int slack_count = 0;
  for (const auto& b : model.buses) {
    if (net.index_.count(b.id))
      throw TopologyError("duplicate bus id: " + b.id);
    net.index_[b.id] = static_cast<int>(net.buses_.size());
    net.buses_.push_back(
        {b.id, b.kv, current_base_a(model.s_base_mva, b.kv), b.slack});
    if (b.slack) {
      net.slack_ = static_cast<int>(net.buses_.size()) - 1;
      ++slack_count;
    }
  }
  if (slack_count != 1)
    throw TopologyError("exactly one slack bus required");

  for (const auto& l : model.lines) {
    auto it = model.line_types.find(l.type);
    if (it == model.line_types.end())
      throw TopologyError("unknown line type: " + l.type);
    const LineType& t = it->second;
    Branch br;
    br.from = net.bus_index(l.from);
    br.to = net.bus_index(l.to);
    const Bus& fb = net.buses_[br.from];
    if (std::abs(fb.base_kv - net.buses_[br.to].base_kv) > 1e-9)
      throw TopologyError("line spans voltage levels: " + l.from + "-" + l.to);
    const double z_base = fb.base_kv * fb.base_kv / model.s_base_mva;
    const double r = t.r_ohm_per_km * l.length_km / z_base;
    const double x = t.x_ohm_per_km * l.length_km / z_base;
    if (r <= 0 && x <= 0)
      throw TopologyError("non-positive line impedance: " + l.from + "-" + l.to);
    br.z_series = {r, x};
    br.y_series = 1.0 / br.z_series;
    br.b_shunt_half = 0.5 * t.b_us_per_km * 1e-6 * l.length_km * z_base;
    br.i_base_a = fb.i_base_a;
    br.ampacity_a = t.ampacity_a;
    if (br.ampacity_a <= 0) throw TopologyError("non-positive ampacity");
    br.ampacity_pu = t.ampacity_a / fb.i_base_a;
    br.specific_energy_a2s = t.specific_energy_a2s;
    net.branches_.push_back(br);
  }

  for (const auto& t : model.transformers) {
    Branch br;
    br.from = net.bus_index(t.from);
    br.to = net.bus_index(t.to);
    br.is_transformer = true;
    // Short-circuit impedance on the transformer's own base, then rescaled
    // to the system base; magnetizing branch neglected.
    const double r_own = t.r_pct / 100.0;
    const double u_own = t.u_sc_pct / 100.0;
    const double x_own = std::sqrt(std::max(0.0, u_own * u_own - r_own * r_own));
    const double scale = model.s_base_mva / (t.rated_kva / 1000.0);
    br.z_series = {r_own * scale, x_own * scale};
    if (std::abs(br.z_series) <= 0)
      throw TopologyError("transformer with zero impedance");
    br.y_series = 1.0 / br.z_series;
    br.b_shunt_half = 0.0;
    const Bus& fb = net.buses_[br.from];
    br.i_base_a = fb.i_base_a;
    br.ampacity_pu = (t.rated_kva / 1000.0) / model.s_base_mva;
    br.ampacity_a = br.ampacity_pu * fb.i_base_a;
    br.specific_energy_a2s = 1e12;  // thermal model not applied to trafos
    net.branches_.push_back(br);
  }

  net.validate();
  net.assemble();
  return net;
}

int Network::bus_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw TopologyError("unknown bus: " + id);
  return it->second;
}

void Network::validate() const {
  const int n = bus_count();
  if (n == 0) throw TopologyError("empty grid");
  if (static_cast<int>(branches_.size()) != n - 1 && n > 1)
    throw TopologyError("topology is not a tree");
  // connectivity
  std::vector<std::vector<int>> adj(n);
  for (const auto& b : branches_) {
    adj[b.from].push_back(b.to);
    adj[b.to].push_back(b.from);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(slack_);
  seen[slack_] = true;
  int reached = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    ++reached;
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        q.push(v);
      }
  }
  if (reached != n) throw TopologyError("grid is not connected");
}

void Network::assemble() {
  const int n = bus_count();
  y_ = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& b : branches_) {
    const std::complex<double> sh{0.0, b.b_shunt_half};
    y_(b.from, b.from) += b.y_series + sh;
    y_(b.to, b.to) += b.y_series + sh;
    y_(b.from, b.to) -= b.y_series;
    y_(b.to, b.from) -= b.y_series;
  }
}

std::complex<double> Network::thevenin_equivalent(int pcc_bus) const {
  if (pcc_bus == slack_) return {0.0, 0.0};
  const int n = bus_count();
  // parent pointers from slack over the tree
  std::vector<int> parent(n, -1), via(n, -1);
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(slack_);
  seen[slack_] = true;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int bi = 0; bi < branch_count(); ++bi) {
      const Branch& b = branches_[bi];
      int other = -1;
      if (b.from == u) other = b.to;
      if (b.to == u) other = b.from;
      if (other >= 0 && !seen[other]) {
        seen[other] = true;
        parent[other] = u;
        via[other] = bi;
        q.push(other);
      }
    }
  }
  if (!seen[pcc_bus]) throw TopologyError("no path from slack to pcc");
  std::complex<double> z{0.0, 0.0};
  for (int u = pcc_bus; u != slack_; u = parent[u]) z += branches_[via[u]].z_series;
  return z;
}

}  // namespace commelec
