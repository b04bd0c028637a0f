#include <doctest.h>

#include <cmath>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/profile.hpp"
#include "cimsim/rng.hpp"

using namespace cimsim;

namespace {
ArrayConfig defaults() { return ArrayConfig{}; }

std::vector<InputCode> common_inputs(const ArrayConfig& cfg, InputCode code) {
  return std::vector<InputCode>(static_cast<std::size_t>(cfg.rows), code);
}
}  // namespace

TEST_CASE("config invariants are enforced") {
  ArrayConfig cfg = defaults();
  CHECK_NOTHROW(cfg.validate());
  cfg.v_bias = 0.45;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = defaults();
  cfg.rows = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = defaults();
  cfg.r_unit = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = defaults();
  cfg.v_adc_high = cfg.v_adc_low;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("input DAC transfer hits the documented anchor points") {
  const ArrayConfig cfg = defaults();
  // zero code maps to the signal zero level
  CHECK(input_dac_transfer(InputCode{0, +1}, cfg) == doctest::Approx(0.4).epsilon(1e-12));
  // half scale
  CHECK(input_dac_transfer(InputCode{32, +1}, cfg) == doctest::Approx(0.3).epsilon(1e-12));
  // symmetry: V(d,+1) + V(d,-1) = 2 * V_BIAS for every magnitude
  for (int d = 0; d <= 63; ++d) {
    const double vp = input_dac_transfer(InputCode{d, +1}, cfg);
    const double vn = input_dac_transfer(InputCode{d, -1}, cfg);
    CHECK(vp + vn == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(vp >= cfg.v_in_low);
    CHECK(vp <= cfg.v_in_high);
  }
  // hypothetical full-scale code of a 6-bit magnitude reaches the references
  ArrayConfig wide = defaults();
  wide.input_bits = 7;  // allows magnitude 64 for the endpoint check
  CHECK(input_dac_transfer(InputCode{64, +1}, wide, nullptr, 0) *
            2.0 ==
        doctest::Approx(2.0 * (0.4 - (64.0 / 128.0) * 0.2)).epsilon(1e-12));
  CHECK_THROWS_AS(input_dac_transfer(InputCode{64, +1}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(input_dac_transfer(InputCode{1, 0}, cfg), std::invalid_argument);
}

TEST_CASE("the polarity convention flag mirrors the transfer") {
  ArrayConfig cfg;
  ArrayConfig flipped = cfg;
  flipped.dac_positive_toward_low = false;
  for (int d = 0; d <= 63; ++d) {
    const double a = input_dac_transfer(InputCode{d, +1}, cfg);
    const double b = input_dac_transfer(InputCode{d, +1}, flipped);
    CHECK(a - 0.4 == doctest::Approx(-(b - 0.4)).epsilon(1e-12));
    CHECK(b == doctest::Approx(input_dac_transfer(InputCode{d, -1}, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("full-scale endpoints under the divisor convention") {
  // with divisor 2^B_D, code 64 would be exactly full scale; code 63 reaches
  // 63/64 of it
  const ArrayConfig cfg = defaults();
  const double v63 = input_dac_transfer(InputCode{63, +1}, cfg);
  CHECK(v63 == doctest::Approx(0.4 - 63.0 / 64.0 * 0.2).epsilon(1e-12));
  const double v63n = input_dac_transfer(InputCode{63, -1}, cfg);
  CHECK(v63n == doctest::Approx(0.4 + 63.0 / 64.0 * 0.2).epsilon(1e-12));
}

TEST_CASE("weight cell current: frozen example and steering") {
  const ArrayConfig cfg = defaults();
  SUBCASE("idle cell conducts nothing") {
    const CellCurrents c = mwc_current(0.2, WeightCode::idle(), cfg);
    CHECK(c.positive == 0.0);
    CHECK(c.negative == 0.0);
    const CellCurrents d = mwc_current(0.2, WeightCode{63, false, false}, cfg);
    CHECK(d.net() == 0.0);
  }
  SUBCASE("full drive onto the positive line") {
    const CellCurrents c = mwc_current(0.2, WeightCode::positive(63), cfg);
    // (0.2 - 0.4)/385e3 * 63/64 = -0.51136... uA
    CHECK(c.positive == doctest::Approx(-5.113636363636363e-7).epsilon(1e-12));
    CHECK(c.negative == 0.0);
  }
  SUBCASE("zero input times any weight is zero") {
    const CellCurrents c = mwc_current(0.4, WeightCode::positive(63), cfg);
    CHECK(c.positive == 0.0);
  }
  SUBCASE("negative line steering") {
    const CellCurrents c = mwc_current(0.3, WeightCode::negative(40), cfg);
    CHECK(c.positive == 0.0);
    CHECK(c.negative == doctest::Approx((0.3 - 0.4) / 385e3 * 40.0 / 64.0));
  }
  CHECK_THROWS_AS(mwc_current(0.3, WeightCode{1, true, true}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(mwc_current(0.3, WeightCode{64, true, false}, cfg), std::invalid_argument);
}

TEST_CASE("column currents sum cells exactly") {
  const ArrayConfig cfg = defaults();
  SUBCASE("all idle") {
    const auto inputs = common_inputs(cfg, InputCode{40, +1});
    const std::vector<WeightCode> weights(static_cast<std::size_t>(cfg.rows));
    const LineCurrents lc = column_currents(inputs, weights, cfg);
    CHECK(lc.positive == 0.0);
    CHECK(lc.negative == 0.0);
  }
  SUBCASE("two identical cells are exactly twice one cell") {
    std::vector<InputCode> inputs(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> weights(static_cast<std::size_t>(cfg.rows));
    inputs[3] = inputs[17] = InputCode{25, -1};
    weights[3] = weights[17] = WeightCode::positive(50);
    const LineCurrents lc = column_currents(inputs, weights, cfg);
    const CellCurrents one =
        mwc_current(input_dac_transfer(InputCode{25, -1}, cfg), WeightCode::positive(50), cfg);
    CHECK(lc.positive == 2.0 * one.positive);
  }
  SUBCASE("random column matches a brute-force sum of per-cell terms") {
    const CounterRng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<InputCode> inputs(static_cast<std::size_t>(cfg.rows));
      std::vector<WeightCode> weights(static_cast<std::size_t>(cfg.rows));
      double want_net = 0.0;
      for (int i = 0; i < cfg.rows; ++i) {
        const int d = static_cast<int>(rng.bits(Stream::stimulus, trial, i, 0) % 64);
        const int s = rng.uniform(Stream::stimulus, trial, i, 1) < 0.5 ? -1 : 1;
        const int mag = static_cast<int>(rng.bits(Stream::stimulus, trial, i, 2) % 64);
        const double pick = rng.uniform(Stream::stimulus, trial, i, 3);
        inputs[static_cast<std::size_t>(i)] = InputCode{d, s};
        WeightCode w = WeightCode::idle();
        if (pick < 1.0 / 3)
          w = WeightCode::positive(mag);
        else if (pick < 2.0 / 3)
          w = WeightCode::negative(mag);
        weights[static_cast<std::size_t>(i)] = w;
        // independent arithmetic: Eq-style term computed from first principles
        const double v = 0.4 - s * (d / 64.0) * 0.2;
        const double term = (v - 0.4) / 385e3 * (mag / 64.0);
        want_net += w.idle_state() ? 0.0 : (w.to_positive ? term : -term);
      }
      const LineCurrents lc = column_currents(inputs, weights, cfg);
      CHECK(lc.net() == doctest::Approx(want_net).epsilon(1e-12));
    }
  }
  SUBCASE("length mismatch is rejected") {
    std::vector<InputCode> inputs(10);
    std::vector<WeightCode> weights(static_cast<std::size_t>(cfg.rows));
    CHECK_THROWS_AS(column_currents(inputs, weights, cfg), std::invalid_argument);
  }
}

TEST_CASE("summing amplifier output: frozen examples") {
  const ArrayConfig cfg = defaults();
  CalibrationState cal = CalibrationState::nominal(cfg);
  SUBCASE("zero current sits at the calibration voltage") {
    const SaOutput s = sa_output(0.0, 0.0, cal, 0, cfg);
    CHECK(s.v_sa == doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("ideal gain at the paper default transresistance") {
    cal.at(0, Line::positive).r_sa = 10.7e3;
    const SaOutput s = sa_output(10e-6, 0.0, cal, 0, cfg);
    CHECK(s.v_sa == doctest::Approx(0.507).epsilon(1e-12));
  }
  SUBCASE("per-line gain and offset errors") {
    cal.at(0, Line::positive).r_sa = 10.7e3;
    NonidealityProfile p = NonidealityProfile::ideal(cfg);
    p.alpha_a[0][0] = 1.05;
    p.beta_a[0][0] = 0.005;
    const SaOutput s = sa_output(10e-6, 0.0, cal, 0, cfg, &p);
    CHECK(s.v_sa == doctest::Approx(0.51735).epsilon(1e-12));
  }
}

TEST_CASE("ADC quantization: anchors, saturation, monotonicity, idempotence") {
  const ArrayConfig cfg = defaults();
  CHECK(adc_quantize(0.2, 0.2, 0.6, cfg).code == 0);
  SUBCASE("mid-range ties away from zero") {
    const AdcResult r = adc_quantize(0.4, 0.2, 0.6, cfg);
    CHECK(r.real == doctest::Approx(31.5).epsilon(1e-12));
    CHECK(r.code == 32);
    CHECK_FALSE(r.clipped);
  }
  SUBCASE("saturation sets the clipped flag") {
    const AdcResult r = adc_quantize(0.7, 0.2, 0.6, cfg);
    CHECK(r.code == 63);
    CHECK(r.clipped);
    const AdcResult lo = adc_quantize(0.1, 0.2, 0.6, cfg);
    CHECK(lo.code == 0);
    CHECK(lo.clipped);
  }
  SUBCASE("monotone non-decreasing in the input voltage") {
    int prev = 0;
    for (int i = 0; i <= 1000; ++i) {
      const int code = adc_quantize(0.15 + i * 0.0005, 0.2, 0.6, cfg).code;
      CHECK(code >= prev);
      prev = code;
    }
  }
  SUBCASE("idempotent on reconstructed code centers") {
    for (int code = 0; code <= 63; ++code) {
      const double v = 0.2 + code / cfg.adc_gain();
      CHECK(adc_quantize(v, 0.2, 0.6, cfg).code == code);
    }
  }
  CHECK_THROWS_AS(adc_quantize(0.3, 0.6, 0.2, cfg), std::invalid_argument);
}

TEST_CASE("nominal digital transfer") {
  const ArrayConfig cfg = defaults();
  const auto inputs = common_inputs(cfg, InputCode{0, +1});
  const std::vector<WeightCode> idle(static_cast<std::size_t>(cfg.rows));
  SUBCASE("all idle lands mid-range") {
    CHECK(mac_ideal(inputs, idle, cfg) == doctest::Approx(31.5).epsilon(1e-12));
  }
  SUBCASE("zero current with the low reference at the calibration level") {
    CHECK(mac_ideal(inputs, idle, cfg, 0.4, 0.6) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("matches the all-ideal simulated chain before rounding") {
    const NonidealityProfile ideal = NonidealityProfile::ideal(cfg);
    const CalibrationState cal = CalibrationState::nominal(cfg);
    const CounterRng rng(123);
    double worst = 0.0;
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w(static_cast<std::size_t>(cfg.rows));
    for (int t = 0; t < 1000; ++t) {
      for (int i = 0; i < cfg.rows; ++i) {
        in[static_cast<std::size_t>(i)] =
            InputCode{static_cast<int>(rng.bits(Stream::stimulus, t, i, 0) % 64),
                      rng.uniform(Stream::stimulus, t, i, 1) < 0.5 ? -1 : +1};
        const int mag = static_cast<int>(rng.bits(Stream::stimulus, t, i, 2) % 64);
        const double pick = rng.uniform(Stream::stimulus, t, i, 3);
        w[static_cast<std::size_t>(i)] =
            pick < 1.0 / 3 ? WeightCode::positive(mag)
                           : (pick < 2.0 / 3 ? WeightCode::negative(mag) : WeightCode::idle());
      }
      const ColumnSample s = evaluate_column(in, w, 0, cfg, &ideal, cal, 0);
      const double q = mac_ideal(in, w, cfg);
      worst = std::max(worst, std::abs(s.code_real - q) / std::max(1.0, std::abs(q)));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("full-array forward pass") {
  const ArrayConfig cfg = defaults();
  const NonidealityProfile ideal = NonidealityProfile::ideal(cfg);
  const CalibrationState cal = CalibrationState::nominal(cfg);

  SUBCASE("shape mismatches are rejected") {
    WeightMatrix w(10, 10);
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    CHECK_THROWS_AS(forward(in, w, cfg, &ideal, cal), std::invalid_argument);
  }
  SUBCASE("one active cell per column reproduces the per-cell examples") {
    WeightMatrix w(cfg.rows, cfg.cols);
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows), InputCode{63, +1});
    for (int j = 0; j < cfg.cols; ++j) w.at(j % cfg.rows, j) = WeightCode::positive(63);
    const auto out = forward(in, w, cfg, &ideal, cal);
    const double i_cell = (input_dac_transfer(InputCode{63, +1}, cfg) - 0.4) / 385e3 * (63.0 / 64.0);
    for (int j = 0; j < cfg.cols; ++j) {
      const double v = 0.4 + cfg.r_sa_nominal() * i_cell;
      CHECK(out[static_cast<std::size_t>(j)].v_sa == doctest::Approx(v).epsilon(1e-9));
    }
  }
  SUBCASE("ideal forward equals rounded mac_ideal per column") {
    const CounterRng rng(9);
    WeightMatrix w(cfg.rows, cfg.cols);
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    for (int i = 0; i < cfg.rows; ++i) {
      in[static_cast<std::size_t>(i)] =
          InputCode{static_cast<int>(rng.bits(Stream::stimulus, 0, i) % 64),
                    rng.uniform(Stream::stimulus, 1, i) < 0.5 ? -1 : +1};
      for (int j = 0; j < cfg.cols; ++j) {
        const int mag = static_cast<int>(rng.bits(Stream::stimulus, 2, i, j) % 64);
        const double pick = rng.uniform(Stream::stimulus, 3, i, j);
        w.at(i, j) = pick < 1.0 / 3 ? WeightCode::positive(mag)
                                    : (pick < 2.0 / 3 ? WeightCode::negative(mag)
                                                      : WeightCode::idle());
      }
    }
    const auto out = forward(in, w, cfg, &ideal, cal);
    for (int j = 0; j < cfg.cols; ++j) {
      const double q = mac_ideal(in, w.column(j), cfg);
      CHECK(out[static_cast<std::size_t>(j)].adc_code ==
            static_cast<int>(std::round(q)));
    }
  }
  SUBCASE("columns are independent: permuting weight columns permutes outputs") {
    const CounterRng rng(10);
    WeightMatrix w(cfg.rows, cfg.cols);
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    for (int i = 0; i < cfg.rows; ++i) {
      in[static_cast<std::size_t>(i)] =
          InputCode{static_cast<int>(rng.bits(Stream::stimulus, 4, i) % 64), +1};
      for (int j = 0; j < cfg.cols; ++j)
        w.at(i, j) = WeightCode::positive(
            static_cast<int>(rng.bits(Stream::stimulus, 5, i, j) % 64));
    }
    WeightMatrix rotated(cfg.rows, cfg.cols);
    for (int i = 0; i < cfg.rows; ++i)
      for (int j = 0; j < cfg.cols; ++j) rotated.at(i, (j + 5) % cfg.cols) = w.at(i, j);
    const auto a = forward(in, w, cfg, &ideal, cal);
    const auto b = forward(in, rotated, cfg, &ideal, cal);
    for (int j = 0; j < cfg.cols; ++j)
      CHECK(a[static_cast<std::size_t>(j)].adc_code ==
            b[static_cast<std::size_t>((j + 5) % cfg.cols)].adc_code);
  }
}

TEST_CASE("odd symmetry and linearity of the ideal chain") {
  const ArrayConfig cfg = defaults();
  SUBCASE("negating all input signs negates the net current exactly") {
    const CounterRng rng(77);
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    std::vector<InputCode> neg(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w(static_cast<std::size_t>(cfg.rows));
    for (int i = 0; i < cfg.rows; ++i) {
      const int d = static_cast<int>(rng.bits(Stream::stimulus, 6, i) % 64);
      const int s = rng.uniform(Stream::stimulus, 7, i) < 0.5 ? -1 : +1;
      in[static_cast<std::size_t>(i)] = InputCode{d, s};
      neg[static_cast<std::size_t>(i)] = InputCode{d, -s};
      w[static_cast<std::size_t>(i)] = WeightCode::positive(
          static_cast<int>(rng.bits(Stream::stimulus, 8, i) % 64));
    }
    CHECK(ideal_net_current(in, w, cfg) == doctest::Approx(-ideal_net_current(neg, w, cfg))
                                              .epsilon(1e-14));
    // V_SA reflects about V_CAL
    const CalibrationState cal = CalibrationState::nominal(cfg);
    const LineCurrents a = column_currents(in, w, cfg);
    const LineCurrents b = column_currents(neg, w, cfg);
    const double va = sa_output(a.positive, a.negative, cal, 0, cfg).v_sa;
    const double vb = sa_output(b.positive, b.negative, cal, 0, cfg).v_sa;
    CHECK(va - 0.4 == doctest::Approx(-(vb - 0.4)).epsilon(1e-12));
  }
  SUBCASE("superposition across rows") {
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w_both(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w_a(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w_b(static_cast<std::size_t>(cfg.rows));
    in[2] = InputCode{33, +1};
    in[9] = InputCode{51, -1};
    w_both[2] = w_a[2] = WeightCode::positive(44);
    w_both[9] = w_b[9] = WeightCode::negative(12);
    CHECK(ideal_net_current(in, w_both, cfg) ==
          doctest::Approx(ideal_net_current(in, w_a, cfg) +
                          ideal_net_current(in, w_b, cfg))
              .epsilon(1e-14));
  }
}

TEST_CASE("simulator steps are bit-for-bit reproducible") {
  const ArrayConfig cfg = defaults();
  const NonidealityProfile p = sample_profile(ProfileSpec::defaults(), cfg, 2024);
  Simulator a(cfg, p), b(cfg, p);
  std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows), InputCode{21, -1});
  WeightMatrix w(cfg.rows, cfg.cols);
  for (auto& c : w.w) c = WeightCode::negative(17);
  for (int t = 0; t < 25; ++t) {
    const auto ra = a.step(in, w);
    const auto rb = b.step(in, w);
    for (int j = 0; j < cfg.cols; ++j) {
      CHECK(ra[static_cast<std::size_t>(j)].v_sa == rb[static_cast<std::size_t>(j)].v_sa);
      CHECK(ra[static_cast<std::size_t>(j)].adc_code == rb[static_cast<std::size_t>(j)].adc_code);
      CHECK(ra[static_cast<std::size_t>(j)].code_real == rb[static_cast<std::size_t>(j)].code_real);
    }
  }
}
