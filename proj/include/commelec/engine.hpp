#pragma once

#include <map>
#include <memory>
#include <set>

#include "commelec/scenario.hpp"

namespace commelec {

// Deterministic message passing with a configurable fixed delay and FIFO
// order per (from, to) channel. Payloads are wire-encoded bytes.
class MessageBus {
 public:
  explicit MessageBus(std::int64_t delay_us) : delay_us_(delay_us) {}
  void register_endpoint(const std::string& id) { known_.insert(id); }
  void dispatch(const std::string& from, const std::string& to,
                std::vector<std::uint8_t> bytes, std::int64_t now_us);
  // messages due for `to` at now_us, FIFO, removed from the queue
  std::vector<std::vector<std::uint8_t>> collect(const std::string& to,
                                                 std::int64_t now_us);

 private:
  struct Item {
    std::int64_t deliver_us;
    std::uint64_t seq;
    std::vector<std::uint8_t> bytes;
  };
  std::int64_t delay_us_;
  std::uint64_t seq_{0};
  std::set<std::string> known_;
  std::map<std::string, std::vector<Item>> queues_;
};

struct RunSummary {
  bool collapse{false};
  double collapse_t_s{-1};
  double duration_s{0};
  double final_soc_slack{0}, final_soc_lv{0};
  std::map<std::string, double> boiler_kwh;
  double pv_available_kwh{0}, pv_produced_kwh{0}, pv_curtailed_kwh{0};
  double v_min{10}, v_max{0};
  double worst_current_ratio{0};
  long safety_violations{0};
  long validity_checks{0}, validity_failures{0};
  long agg_validity_checks{0}, agg_validity_failures{0};
  long ga_cycles{0};
  double ga_wall_ms_median{0}, ga_wall_ms_max{0};
  int aggregation_degenerate_cycles{0};
  std::string method;
  std::string topology;

  std::string to_json(bool include_timing) const;
};

// Runs one scenario, streaming metric CSVs into out_dir (empty disables
// file output) and returning the summary.
RunSummary run_scenario(const Scenario& sc, const std::string& out_dir);

}  // namespace commelec
