#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cimsim {

/// Candidate resistor technology for the weight-cell ladder. The `listed_*`
/// fields carry the published comparison figures at their displayed
/// precision; they are reference data, kept because some published factors
/// fold in assumptions (array refit into the baseline footprint, rounded
/// intermediate currents) that are not derivable from the row's own numbers.
/// Exact ratios are always computed alongside.
struct TechSpec {
  std::string name;
  double r_unit = 0.0;       // ohms
  double area_1bit = 0.0;    // um^2 per 1-bit MWC
  double area_6bit = 0.0;    // um^2 per 6-bit MWC
  double v_op = 1.0;         // volts assumed across the cell
  bool baseline = false;

  double listed_unit_current_ua = 0.0;
  double listed_area_factor = 1.0;
  double listed_power_factor = 1.0;

  void validate() const {
    if (r_unit <= 0) throw std::invalid_argument("tech spec: r_unit must be positive");
    if (area_1bit < 0 || area_6bit < area_1bit)
      throw std::invalid_argument("tech spec: area range must be ordered");
    if (v_op <= 0) throw std::invalid_argument("tech spec: v_op must be positive");
  }
};

/// Current through one cell at the assumed operating voltage: V_op / R_U.
inline double unit_current(const TechSpec& spec) {
  spec.validate();
  return spec.v_op / spec.r_unit;
}

struct ImprovementFactors {
  double area = 1.0;   // baseline 6-bit area / spec 6-bit area
  double power = 1.0;  // baseline unit current / spec unit current
};

inline ImprovementFactors improvement_factors(const TechSpec& spec,
                                              const TechSpec& baseline) {
  spec.validate();
  baseline.validate();
  ImprovementFactors f;
  f.power = unit_current(baseline) / unit_current(spec);
  f.area = baseline.area_6bit / spec.area_6bit;
  return f;
}

/// The four evaluated technologies: the fabricated polysilicon baseline, two
/// high-density linear resistor candidates post-processable atop CMOS, and a
/// same-node RRAM reference.
inline std::vector<TechSpec> builtin_techs() {
  std::vector<TechSpec> t(4);
  t[0] = {"polysilicon", 0.385e6, 17.0, 120.0, 1.0, true, 2.6, 1.0, 1.0};
  t[1] = {"MOR", 7e6, 1.0, 8.0, 1.0, false, 0.15, 14.0, 17.0};
  t[2] = {"WOx", 28e6, 1.0, 8.0, 1.0, false, 0.036, 14.0, 70.0};
  t[3] = {"RRAM", 0.03e6, 0.05, 0.4, 1.0, false, 33.0, 225.0, 0.08};
  return t;
}

inline const TechSpec& builtin_baseline(const std::vector<TechSpec>& techs) {
  for (const TechSpec& t : techs)
    if (t.baseline) return t;
  throw std::invalid_argument("no baseline technology in table");
}

}  // namespace cimsim
