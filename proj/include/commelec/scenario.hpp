#pragma once

#include <optional>
#include <string>
#include <vector>

#include "commelec/aggregation.hpp"
#include "commelec/ampacity.hpp"
#include "commelec/battery.hpp"
#include "commelec/boiler.hpp"
#include "commelec/droop.hpp"
#include "commelec/generator.hpp"
#include "commelec/grid.hpp"
#include "commelec/profiles.hpp"
#include "commelec/pv.hpp"
#include "commelec/uload.hpp"

namespace commelec {

enum class Method { Commelec, Dp, Dps };
enum class Topology { Hierarchical, Flat };

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct AgentSpec {
  std::string id;
  std::string type;  // ess | pv | sg | boiler | ul
  std::string bus;
  std::string ga;  // leader: "lvga" or "mvga"
  bool slack{false};
  double weight{1.0};
  // type-specific parameter blocks (only the matching one is meaningful)
  BatteryParams battery;
  PvParams pv;
  SgParams sg;
  BoilerParams boiler;
  UlParams ul;
  double initial_soc{0.5};
  double initial_kwh{0};
  std::string profile_csv;  // UL consumption or boiler demand profile
  double demand_band_kw{0};
  std::optional<DroopParams> droop;
};

struct ScenarioEvent {
  double t_s{0};
  std::string disconnect;  // agent id
};

struct TimingConfig {
  double ga_cycle_s{0.1};
  double measurement_s{0.02};
  double physics_s{0.01};
  double message_delay_s{0.0};
};

struct Scenario {
  std::string name{"scenario"};
  GridModel grid;
  Method method{Method::Commelec};
  Topology topology{Topology::Hierarchical};
  double duration_s{100};
  std::uint64_t seed{1};
  bool strict_validity{true};
  TimingConfig timing;
  GAConfig lvga, mvga, flat;
  double flat_lv_weight_scale{1.0};
  double mvga_aggregate_weight{1.0};
  AggregationConfig aggregation;
  int loss_bound_samples{2000};
  double loss_margin_frac{0.05};
  double loss_margin_kw{0.05};
  AmpacityParams ampacity;
  double droop_t_i_s{50.0};
  std::string irradiance_csv;
  IrradianceParams irradiance;
  std::string ul_default_csv;
  std::vector<AgentSpec> agents;
  std::vector<ScenarioEvent> events;
  std::string base_dir;  // directory for relative file references
};

// Parses the scenario JSON (see data/benchmark_scenario.json). Paths are
// resolved relative to the file's directory.
Scenario scenario_from_file(const std::string& path);
Scenario scenario_from_json(const std::string& text, const std::string& base_dir);

}  // namespace commelec
