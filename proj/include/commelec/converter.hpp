#pragma once

#include <vector>

#include "commelec/profile.hpp"

namespace commelec {

// Grid-interface power converter. Powers on the AC side; a constant
// efficiency maps to the DC side depending on flow direction.
struct ConverterSpec {
  double s_rated_kva{0};
  double cos_min{0};           // 0 disables the power-factor constraint
  bool unidirectional{false};  // injection only (P >= 0)
  double eta{1.0};
};

std::vector<Constraint> converter_region(const ConverterSpec& spec);

double ac_from_dc(const ConverterSpec& spec, double p_dc);
double dc_from_ac(const ConverterSpec& spec, double p_ac);

}  // namespace commelec
