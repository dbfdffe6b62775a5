#include "commelec/converter.hpp"

namespace commelec {

std::vector<Constraint> converter_region(const ConverterSpec& spec) {
  std::vector<Constraint> cs;
  cs.push_back(Disc{{}, spec.s_rated_kva});
  if (spec.unidirectional) cs.push_back(HalfPlane{-1.0, 0.0, 0.0});  // P >= 0
  if (spec.cos_min > 0.0) cs.push_back(Cone{spec.cos_min, +1});
  return cs;
}

double ac_from_dc(const ConverterSpec& spec, double p_dc) {
  return p_dc >= 0 ? spec.eta * p_dc : p_dc / spec.eta;
}

double dc_from_ac(const ConverterSpec& spec, double p_ac) {
  return p_ac >= 0 ? p_ac / spec.eta : p_ac * spec.eta;
}

}  // namespace commelec
