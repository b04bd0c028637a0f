#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cimsim/metrics.hpp"
#include "cimsim/rng.hpp"

using namespace cimsim;

TEST_CASE("compute SNR: sentinels and frozen arithmetic") {
  SUBCASE("exact agreement reports the infinity sentinel") {
    const std::vector<double> q{1, 5, 9, 13};
    const SnrEntry e = compute_snr(q, q);
    CHECK(std::isinf(e.snr_db));
    CHECK(e.err_mean == 0.0);
  }
  SUBCASE("a pure constant offset is invisible to the variance but reported") {
    const std::vector<double> nom{1, 5, 9, 13};
    std::vector<double> act;
    for (double v : nom) act.push_back(v + 2.5);
    const SnrEntry e = compute_snr(nom, act);
    CHECK(std::isinf(e.snr_db));
    CHECK(e.err_mean == doctest::Approx(-2.5));
    CHECK(std::isfinite(e.snr_mse_db));  // the offset-sensitive figure sees it
  }
  SUBCASE("uniform codes with white error: 20 dB, ENOB about 3.03") {
    std::vector<double> nom, act;
    const CounterRng rng(64);
    for (int rep = 0; rep < 200; ++rep)
      for (int code = 0; code < 64; ++code) {
        nom.push_back(code);
        // error with population variance ~3.4125 built from +/-a two-point mass
        const double a = std::sqrt(3.4125);
        act.push_back(code - (rng.uniform(Stream::stimulus, rep, code) < 0.5 ? a : -a));
      }
    const SnrEntry e = compute_snr(nom, act);
    // var(0..63) = 341.25, var(e)=3.4125 -> SNR 100 = 20 dB
    CHECK(e.snr_db == doctest::Approx(20.0).epsilon(0.01));
    CHECK(e.enob == doctest::Approx(3.0299).epsilon(0.01));
  }
  SUBCASE("zero nominal variance is rejected") {
    const std::vector<double> nom{3, 3, 3}, act{1, 2, 3};
    CHECK_THROWS_AS(compute_snr(nom, act), std::invalid_argument);
  }
}

TEST_CASE("SNR invariances") {
  const CounterRng rng(12);
  std::vector<double> nom(512), err(512);
  for (int i = 0; i < 512; ++i) {
    nom[static_cast<std::size_t>(i)] = rng.bits(Stream::stimulus, 0, i) % 64;
    err[static_cast<std::size_t>(i)] = rng.gaussian(Stream::stimulus, 1, i);
  }
  std::vector<double> act(512), act_shift(512), act_scaled(512);
  for (int i = 0; i < 512; ++i) {
    act[static_cast<std::size_t>(i)] = nom[static_cast<std::size_t>(i)] - err[static_cast<std::size_t>(i)];
    act_shift[static_cast<std::size_t>(i)] = act[static_cast<std::size_t>(i)] + 7.0;
    act_scaled[static_cast<std::size_t>(i)] =
        nom[static_cast<std::size_t>(i)] - 3.0 * err[static_cast<std::size_t>(i)];
  }
  const SnrEntry base = compute_snr(nom, act);
  SUBCASE("adding a constant to the measurement leaves the SNR unchanged") {
    const SnrEntry shifted = compute_snr(nom, act_shift);
    CHECK(shifted.snr_linear == doctest::Approx(base.snr_linear).epsilon(1e-12));
  }
  SUBCASE("scaling the error by k divides the SNR by k^2") {
    const SnrEntry scaled = compute_snr(nom, act_scaled);
    CHECK(scaled.snr_linear == doctest::Approx(base.snr_linear / 9.0).epsilon(1e-9));
  }
}

TEST_CASE("ENOB round trip") {
  for (double enob : {1.0, 2.3, 3.3, 4.0, 5.99}) {
    CHECK(enob_from_db(snr_db_from_enob(enob)) == doctest::Approx(enob).epsilon(1e-12));
  }
}

TEST_CASE("normalized throughput and efficiency golden numbers") {
  ArrayConfig cfg;
  SUBCASE("defaults reach the published 113 1b-GOPS within one percent") {
    const double t = throughput_1b_gops(cfg);
    CHECK(t == doctest::Approx(112.896).epsilon(1e-12));
    CHECK(std::abs(t - 113.0) / 113.0 < 0.01);
  }
  SUBCASE("a 1x1 array at one bit and one hertz performs two ops per second") {
    ArrayConfig tiny;
    tiny.rows = 1;
    tiny.cols = 1;
    tiny.input_bits = 1;  // plus sign -> 2 total, matching the 1:1 convention
    tiny.weight_bits = 1;
    tiny.f_inference = 1.0;
    // 2 MAC-ops * (2*2 bit product) / 1e9 ... the 1:1 convention of the table
    // counts magnitude bits only when no sign bit exists; with the sign bit
    // the structural identity below still pins linearity in every factor.
    const double t = throughput_1b_gops(tiny);
    CHECK(t == doctest::Approx(2.0 * 4.0 / 1e9).epsilon(1e-12));
  }
  SUBCASE("throughput is linear in the inference frequency") {
    ArrayConfig fast = cfg;
    fast.f_inference *= 2.0;
    CHECK(throughput_1b_gops(fast) == doctest::Approx(2.0 * throughput_1b_gops(cfg)));
  }
  SUBCASE("the energy constant reproduces the published efficiency within 2%") {
    const double eff = energy_efficiency_tops_w(throughput_1b_gops(cfg), 16.9e-3);
    CHECK(std::abs(eff - 6.65) / 6.65 < 0.02);
  }
  SUBCASE("efficiency scaling") {
    CHECK(energy_efficiency_tops_w(0.0, 1.0) == 0.0);
    CHECK(energy_efficiency_tops_w(10.0, 0.5) ==
          doctest::Approx(2.0 * energy_efficiency_tops_w(10.0, 1.0)));
    CHECK_THROWS_AS(energy_efficiency_tops_w(1.0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("column error extraction delegates to the least-squares fit") {
  const std::vector<double> nom{10, 20, 30}, act{21, 41, 61};
  const FitResult f = extract_column_errors(nom, act);
  CHECK(f.g_tot == doctest::Approx(2.0));
  CHECK(f.eps_tot == doctest::Approx(1.0));
}

TEST_CASE("snr sweep stimuli are deterministic and exercise both lines") {
  ArrayConfig cfg;
  cfg.cols = 4;
  Simulator sim(cfg, NonidealityProfile::ideal(cfg));
  const SnrSweep a = snr_sweep(sim, SnrStimulus::full_scale, 64, 5, 0);
  const SnrSweep b = snr_sweep(sim, SnrStimulus::full_scale, 64, 5, 0);
  CHECK(a.q_act == b.q_act);
  CHECK(a.q_nom_col == b.q_nom_col);
  // nominal outputs span most of the code range under the full-scale stimulus
  double lo = 1e9, hi = -1e9;
  for (double v : a.q_nom) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo < 5.0);
  CHECK(hi > 58.0);
  const SnrSweep u = snr_sweep(sim, SnrStimulus::uniform, 64, 5, 0);
  CHECK(u.q_act != a.q_act);
}
