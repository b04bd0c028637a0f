#include <doctest.h>

#include <cmath>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/nodal.hpp"
#include "cimsim/profile.hpp"
#include "cimsim/serialize.hpp"

using namespace cimsim;

TEST_CASE("degenerate spec reproduces the means exactly") {
  ArrayConfig cfg;
  ProfileSpec spec;  // everything constant at the nominal values
  spec.alpha_a = Dist::constant(1.02);
  spec.beta_a = Dist::constant(0.003);
  const NonidealityProfile p = sample_profile(spec, cfg, 5);
  for (int c = 0; c < cfg.cols; ++c)
    for (int l = 0; l < 2; ++l) {
      CHECK(p.alpha_a[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] == 1.02);
      CHECK(p.beta_a[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] == 0.003);
    }
  for (double m : p.mismatch) CHECK(m == 0.0);
}

TEST_CASE("same seed regenerates the identical profile") {
  ArrayConfig cfg;
  const ProfileSpec spec = ProfileSpec::defaults();
  const NonidealityProfile a = sample_profile(spec, cfg, 99);
  const NonidealityProfile b = sample_profile(spec, cfg, 99);
  CHECK(a.alpha_a == b.alpha_a);
  CHECK(a.beta_a == b.beta_a);
  CHECK(a.mismatch == b.mismatch);
  CHECK(a.alpha_d == b.alpha_d);
  CHECK(a.adc_inl_amp == b.adc_inl_amp);
  const NonidealityProfile c = sample_profile(spec, cfg, 100);
  CHECK(a.alpha_a != c.alpha_a);
}

TEST_CASE("mismatch sample mean is within the standard-error bound") {
  ArrayConfig cfg;  // 36x32 = 1152 cells
  ProfileSpec spec;
  spec.mismatch_sigma = Dist::constant(0.01);
  const NonidealityProfile p = sample_profile(spec, cfg, 7);
  double mean = 0.0;
  for (double m : p.mismatch) mean += m;
  mean /= static_cast<double>(p.mismatch.size());
  CHECK(std::abs(mean) < 3.0 * 0.01 / std::sqrt(1152.0));
}

TEST_CASE("profile JSON dump restores exactly") {
  ArrayConfig cfg;
  const NonidealityProfile p = sample_profile(ProfileSpec::defaults(), cfg, 321);
  const NonidealityProfile q = profile_from_json(to_json(p));
  CHECK(p.alpha_a == q.alpha_a);
  CHECK(p.beta_a == q.beta_a);
  CHECK(p.mismatch == q.mismatch);
  CHECK(p.inl_amp == q.inl_amp);
  CHECK(p.adc_inl_amp == q.adc_inl_amp);
  CHECK(p.adc_inl_coeff == q.adc_inl_coeff);
  CHECK(p.noise_sigma == q.noise_sigma);
  CHECK(p.seed == q.seed);
}

TEST_CASE("spec validation rejects bad parameters") {
  ProfileSpec s;
  s.alpha_a = Dist::normal(1.0, 0.1, -0.5, 1.5);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = ProfileSpec{};
  s.noise_sigma = Dist{Dist::Kind::normal, 0, -1, 0, 0, 0, 0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("attenuation map: identity limit and monotonicity") {
  ArrayConfig cfg;
  SUBCASE("zero parasitics give unity factors") {
    const AttenuationMap m = attenuation_map(cfg, 0, 0, 0);
    for (int i = 0; i < cfg.rows; ++i)
      for (int j = 0; j < cfg.cols; ++j) {
        CHECK(m.factor(i, j) == 1.0);
        CHECK(m.reg_ohms(i, j) == 0.0);
      }
  }
  SUBCASE("factors shrink along rows and drops grow along columns") {
    const AttenuationMap m = attenuation_map(cfg, 100, 10, 10);
    for (int i = 0; i < cfg.rows; ++i)
      for (int j = 0; j + 1 < cfg.cols; ++j) {
        CHECK(m.factor(i, j + 1) <= m.factor(i, j));
        CHECK(m.factor(i, j) > 0.0);
        CHECK(m.factor(i, j) <= 1.0);
      }
    for (int i = 0; i + 1 < cfg.rows; ++i)
      CHECK(m.reg_ohms(i + 1, 0) >= m.reg_ohms(i, 0));
  }
  CHECK_THROWS_AS(attenuation_map(cfg, -1, 0, 0), std::invalid_argument);
}

TEST_CASE("first-order parasitics track the exact nodal solve within 2%") {
  ArrayConfig cfg;
  cfg.rows = 4;
  cfg.cols = 4;
  NonidealityProfile prof = NonidealityProfile::ideal(cfg);
  prof.r_driver = 100;
  prof.r_wire_x = 10;
  prof.r_wire_y = 10;

  SmallArrayState st;
  st.cfg = cfg;
  st.r_driver = 100;
  st.r_wire_x = 10;
  st.r_wire_y = 10;
  st.weights = WeightMatrix(4, 4);
  st.inputs.resize(4);
  const CounterRng rng(55);
  const double fullscale_cell = (0.2 * 63.0 / 64.0) / cfg.r_unit * (63.0 / 64.0);
  for (int trial = 0; trial < 20; ++trial) {
    for (int i = 0; i < 4; ++i) {
      st.inputs[static_cast<std::size_t>(i)] =
          InputCode{static_cast<int>(rng.bits(Stream::stimulus, trial, i, 0) % 64),
                    rng.uniform(Stream::stimulus, trial, i, 1) < 0.5 ? -1 : +1};
      for (int j = 0; j < 4; ++j) {
        const int mag = static_cast<int>(rng.bits(Stream::stimulus, trial, i, 10 + j) % 64);
        st.weights.at(i, j) = rng.uniform(Stream::stimulus, trial, i, 20 + j) < 0.5
                                  ? WeightCode::positive(mag)
                                  : WeightCode::negative(mag);
      }
    }
    const NodalSolution exact = nodal_oracle(st);
    for (int j = 0; j < 4; ++j) {
      const auto cells =
          column_cell_currents(st.inputs, st.weights.column(j), cfg, &prof, j);
      for (int i = 0; i < 4; ++i) {
        const double approx = cells[static_cast<std::size_t>(i)].positive -
                              cells[static_cast<std::size_t>(i)].negative;
        double want = exact.cell_current[static_cast<std::size_t>(i) * 4 + j];
        if (!st.weights.at(i, j).to_positive) want = -want;
        CHECK(std::abs(approx - want) <=
              0.02 * std::max(std::abs(want), 1e-3 * fullscale_cell));
      }
    }
  }
}

TEST_CASE("output noise statistics match the configured sigma") {
  ArrayConfig cfg;
  NonidealityProfile p = NonidealityProfile::ideal(cfg);
  p.noise_sigma = 0.005;
  p.seed = 42;
  const CalibrationState cal = CalibrationState::nominal(cfg);
  std::vector<double> v;
  for (int k = 0; k < 1000; ++k)
    v.push_back(sa_output(0, 0, cal, 3, cfg, &p, static_cast<std::uint64_t>(k)).v_sa);
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  CHECK(std::sqrt(var) == doctest::Approx(0.005).epsilon(0.15));
}

TEST_CASE("raising any single error magnitude never lowers the mean code error") {
  ArrayConfig cfg;
  cfg.cols = 8;  // keep the batch cheap
  const CalibrationState cal = CalibrationState::nominal(cfg);

  const auto mean_abs_error = [&](const NonidealityProfile& prof) {
    const CounterRng rng(2718);
    double acc = 0.0;
    int n = 0;
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w(static_cast<std::size_t>(cfg.rows));
    for (int t = 0; t < 80; ++t) {
      for (int i = 0; i < cfg.rows; ++i) {
        in[static_cast<std::size_t>(i)] =
            InputCode{static_cast<int>(rng.bits(Stream::stimulus, t, i, 0) % 64),
                      rng.uniform(Stream::stimulus, t, i, 1) < 0.5 ? -1 : +1};
        const int mag = static_cast<int>(rng.bits(Stream::stimulus, t, i, 2) % 64);
        w[static_cast<std::size_t>(i)] = rng.uniform(Stream::stimulus, t, i, 3) < 0.5
                                             ? WeightCode::positive(mag)
                                             : WeightCode::negative(mag);
      }
      for (int col = 0; col < cfg.cols; ++col) {
        const ColumnSample s = evaluate_column(in, w, col, cfg, &prof, cal, t);
        acc += std::abs(s.code_real - mac_ideal(in, w, cfg));
        ++n;
      }
    }
    return acc / n;
  };

  // noiseless base profile with moderate errors everywhere
  ProfileSpec spec = ProfileSpec::defaults();
  spec.noise_sigma = Dist::constant(0.0);
  spec.drift_rate = Dist::constant(0.0);
  const NonidealityProfile base = sample_profile(spec, cfg, 31415);
  const double base_err = mean_abs_error(base);

  SUBCASE("double the gain deviations") {
    NonidealityProfile p = base;
    for (auto& pair : p.alpha_a)
      for (double& a : pair) a = 1.0 + 2.0 * (a - 1.0);
    CHECK(mean_abs_error(p) >= base_err);
  }
  SUBCASE("double the offsets") {
    NonidealityProfile p = base;
    for (auto& pair : p.beta_a)
      for (double& b : pair) b *= 2.0;
    CHECK(mean_abs_error(p) >= base_err);
  }
  SUBCASE("double the converter INL") {
    NonidealityProfile p = base;
    p.adc_inl_amp *= 2.0;
    CHECK(mean_abs_error(p) >= base_err);
  }
  SUBCASE("double the cell mismatch") {
    NonidealityProfile p = base;
    for (double& m : p.mismatch) m *= 2.0;
    CHECK(mean_abs_error(p) >= base_err);
  }
  SUBCASE("double the parasitics") {
    NonidealityProfile p = base;
    p.r_driver *= 2.0;
    p.r_wire_x *= 2.0;
    p.r_wire_y *= 2.0;
    // statistical property over a finite batch; interactions with the other
    // (fixed) errors can produce ties
    CHECK(mean_abs_error(p) >= base_err * (1.0 - 1e-3));
  }
}

TEST_CASE("drift: deterministic, zero at rate zero, wander grows with separation") {
  ArrayConfig cfg;
  NonidealityProfile p = NonidealityProfile::ideal(cfg);
  p.seed = 77;
  CHECK(p.drift_offset(3, 1000) == 0.0);  // rate defaults to zero
  p.drift_rate = 1e-4;
  CHECK(p.drift_offset(3, 1000) == p.drift_offset(3, 1000));
  CHECK(p.drift_offset(3, 1000) != p.drift_offset(4, 1000));
  // mean squared increment over short separations is well below long ones
  double short_ms = 0, long_ms = 0;
  for (int k = 0; k < 400; ++k) {
    const std::uint64_t base = 10000 + static_cast<std::uint64_t>(k) * 4096;
    const double d1 = p.drift_offset(0, base + 1) - p.drift_offset(0, base);
    const double d2 = p.drift_offset(0, base + 2048) - p.drift_offset(0, base);
    short_ms += d1 * d1;
    long_ms += d2 * d2;
  }
  CHECK(long_ms > 10.0 * short_ms);
  // the wander feeds the chain as an additive output offset
  const CalibrationState cal = CalibrationState::nominal(cfg);
  const double v0 = sa_output(0, 0, cal, 0, cfg, &p, 5).v_sa;
  NonidealityProfile q = p;
  q.drift_rate = 0.0;
  const double v1 = sa_output(0, 0, cal, 0, cfg, &q, 5).v_sa;
  CHECK(v0 != v1);
}

TEST_CASE("ideal profile leaves the chain exactly nominal") {
  ArrayConfig cfg;
  const NonidealityProfile p = NonidealityProfile::ideal(cfg);
  CHECK(p.is_ideal());
  const CalibrationState cal = CalibrationState::nominal(cfg);
  std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows), InputCode{40, -1});
  std::vector<WeightCode> w(static_cast<std::size_t>(cfg.rows), WeightCode::positive(63));
  const ColumnSample with_profile = evaluate_column(in, w, 0, cfg, &p, cal, 0);
  const ColumnSample without = evaluate_column(in, w, 0, cfg, nullptr, cal, 0);
  CHECK(with_profile.v_sa == without.v_sa);
  CHECK(with_profile.code_real == without.code_real);
}
