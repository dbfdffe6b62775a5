#pragma once

#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace commelec {

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LineType {
  double r_ohm_per_km{0};
  double x_ohm_per_km{0};
  double b_us_per_km{0};
  double ampacity_a{0};
  double specific_energy_a2s{4e4};  // conductor Joule-integral budget
};

struct BusSpec {
  std::string id;
  double kv{0};
  bool slack{false};
};

struct LineSpec {
  std::string from, to;
  std::string type;
  double length_km{0};
};

struct TransformerSpec {
  std::string from, to;  // primary bus, secondary bus
  double primary_kv{0}, secondary_kv{0};
  double rated_kva{0};
  double u_sc_pct{0};  // short-circuit voltage %
  double r_pct{0};     // short-circuit resistance %
};

// Raw grid description as ingested from config.
struct GridModel {
  double s_base_mva{1.0};
  std::map<std::string, LineType> line_types;
  std::vector<BusSpec> buses;
  std::vector<LineSpec> lines;
  std::vector<TransformerSpec> transformers;
};

GridModel grid_from_json(const std::string& json_text);

// Per-unit network assembled from a GridModel. All electrical quantities in
// per-unit on s_base; currents in per-unit of the per-level current base.
class Network {
 public:
  struct Bus {
    std::string id;
    double base_kv{0};
    double i_base_a{0};  // current base at this voltage level
    bool slack{false};
  };
  struct Branch {
    int from{-1}, to{-1};
    std::complex<double> z_series;  // pu
    std::complex<double> y_series;  // pu
    double b_shunt_half{0};         // pu, per end
    double ampacity_pu{0};          // static limit, pu of from-side base
    double ampacity_a{0};           // static limit, amps
    double specific_energy_a2s{4e4};
    double i_base_a{0};             // amps per pu for this branch
    bool is_transformer{false};
  };

  static Network build(const GridModel& model);

  double s_base_mva() const { return s_base_; }
  int bus_count() const { return static_cast<int>(buses_.size()); }
  int branch_count() const { return static_cast<int>(branches_.size()); }
  int slack_bus() const { return slack_; }
  const Bus& bus(int i) const { return buses_[i]; }
  const Branch& branch(int i) const { return branches_[i]; }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }

  int bus_index(const std::string& id) const;  // throws if unknown

  // Complex nodal admittance matrix (pu).
  const Eigen::MatrixXcd& admittance() const { return y_; }

  // Series impedance (pu) of the slack->bus path of the tree.
  std::complex<double> thevenin_equivalent(int pcc_bus) const;

  // Derived view: same network with one branch replacing the path to a
  // remote slack (used to build an internal GA's model around a PCC).
  int pq_count() const { return bus_count() - 1; }

 private:
  double s_base_{1.0};
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::map<std::string, int> index_;
  int slack_{0};
  Eigen::MatrixXcd y_;

  void assemble();
  void validate() const;
};

}  // namespace commelec
