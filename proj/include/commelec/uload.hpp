#pragma once

#include <cstdint>

#include "commelec/message.hpp"
#include "commelec/profiles.hpp"

namespace commelec {

struct UlParams {
  double rho_max_kva{15};
};

// Uncontrollable load: requests are ignored; the advertisement is a
// singleton at the demand forecast with the full semicircle as belief.
class UlAgent {
 public:
  UlAgent(std::string id, UlParams par, TimeSeries p_profile,
          TimeSeries q_profile);

  const std::string& id() const { return id_; }
  Advertisement make_advertisement(std::int64_t t_us, double t_s);
  PQ actual(double t_s) const;
  void disconnect();

 private:
  std::string id_;
  UlParams par_;
  TimeSeries p_profile_, q_profile_;
  bool disconnected_{false};
};

}  // namespace commelec
