#include <doctest.h>

#include <cmath>

#include "cimsim/techproj.hpp"

using namespace cimsim;

TEST_CASE("unit currents follow V_op / R_U") {
  const auto techs = builtin_techs();
  REQUIRE(techs.size() == 4);
  CHECK(unit_current(techs[0]) == doctest::Approx(1.0 / 0.385e6).epsilon(1e-12));
  CHECK(unit_current(techs[1]) == doctest::Approx(1.0 / 7e6).epsilon(1e-12));
  CHECK(unit_current(techs[2]) == doctest::Approx(1.0 / 28e6).epsilon(1e-12));
  CHECK(unit_current(techs[3]) == doctest::Approx(1.0 / 0.03e6).epsilon(1e-12));
  // where plain rounding reproduces the published display, check it
  CHECK(std::round(unit_current(techs[0]) * 1e6 * 10) / 10 == 2.6);
  CHECK(std::round(unit_current(techs[2]) * 1e9) == 36.0);  // 36 nA
  CHECK(std::round(unit_current(techs[3]) * 1e6) == 33.0);
}

TEST_CASE("improvement factors: baseline identity and exact ratios") {
  const auto techs = builtin_techs();
  const TechSpec& base = builtin_baseline(techs);
  CHECK(base.name == "polysilicon");
  const ImprovementFactors self = improvement_factors(base, base);
  CHECK(self.area == 1.0);
  CHECK(self.power == 1.0);

  const ImprovementFactors mor = improvement_factors(techs[1], base);
  CHECK(mor.power == doctest::Approx(7.0 / 0.385).epsilon(1e-12));
  CHECK(mor.area == doctest::Approx(120.0 / 8.0).epsilon(1e-12));
  const ImprovementFactors rram = improvement_factors(techs[3], base);
  CHECK(rram.power == doctest::Approx(0.03 / 0.385).epsilon(1e-12));
  // the published RRAM power factor is reproducible by rounding
  CHECK(std::round(rram.power * 100) / 100 == 0.08);
}

TEST_CASE("published comparison figures ride along as reference data") {
  const auto techs = builtin_techs();
  CHECK(techs[1].listed_unit_current_ua == 0.15);
  CHECK(techs[1].listed_area_factor == 14.0);
  CHECK(techs[1].listed_power_factor == 17.0);
  CHECK(techs[2].listed_power_factor == 70.0);
  CHECK(techs[3].listed_power_factor == 0.08);
}

TEST_CASE("power factor grows with unit resistance") {
  const auto techs = builtin_techs();
  const TechSpec& base = builtin_baseline(techs);
  double prev = 0.0;
  for (double r : {0.1e6, 0.385e6, 1e6, 7e6, 28e6}) {
    TechSpec t = base;
    t.name = "probe";
    t.baseline = false;
    t.r_unit = r;
    const double f = improvement_factors(t, base).power;
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("spec validation") {
  TechSpec t;
  t.name = "bad";
  t.r_unit = 0;
  CHECK_THROWS_AS(unit_current(t), std::invalid_argument);
  t.r_unit = 1e6;
  t.area_1bit = 10;
  t.area_6bit = 5;  // inverted range
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}
