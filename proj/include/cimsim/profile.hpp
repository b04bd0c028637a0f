#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cimsim/core.hpp"
#include "cimsim/rng.hpp"

namespace cimsim {

/// Sampling distribution for one profile field. `normal` draws are clamped to
/// [lo, hi]; `uniform` draws over [lo, hi]; `sym_uniform` draws
/// mean +/- U[mag_lo, mag_hi] with a random sign, which keeps a deviation
/// bounded away from zero (used for the shipped gain-error defaults).
struct Dist {
  enum class Kind { normal, uniform, sym_uniform };
  Kind kind = Kind::normal;
  double mean = 0.0;
  double stddev = 0.0;
  double lo = -1e300;
  double hi = 1e300;
  double mag_lo = 0.0;
  double mag_hi = 0.0;

  static Dist constant(double v) { return Dist{Kind::normal, v, 0.0, v, v, 0, 0}; }
  static Dist normal(double mean, double sd, double lo = -1e300, double hi = 1e300) {
    return Dist{Kind::normal, mean, sd, lo, hi, 0, 0};
  }
  static Dist uniform(double lo, double hi) {
    return Dist{Kind::uniform, 0.5 * (lo + hi), 0, lo, hi, 0, 0};
  }
  static Dist sym_uniform(double mean, double mag_lo, double mag_hi) {
    return Dist{Kind::sym_uniform, mean, 0, -1e300, 1e300, mag_lo, mag_hi};
  }

  void validate() const {
    if (stddev < 0) throw std::invalid_argument("distribution stddev must be >= 0");
    if (lo > hi) throw std::invalid_argument("distribution bounds inverted");
    if (mag_lo < 0 || mag_hi < mag_lo)
      throw std::invalid_argument("sym_uniform magnitudes invalid");
  }

  double sample(const CounterRng& rng, Stream s, std::uint64_t a = 0,
                std::uint64_t b = 0, std::uint64_t c = 0) const {
    switch (kind) {
      case Kind::uniform:
        return lo + (hi - lo) * rng.uniform(s, a, b, c);
      case Kind::sym_uniform: {
        const double mag = mag_lo + (mag_hi - mag_lo) * rng.uniform(s, a, b, c, 2);
        const double sign = rng.uniform(s, a, b, c, 3) < 0.5 ? -1.0 : 1.0;
        return mean + sign * mag;
      }
      case Kind::normal:
      default:
        return std::clamp(mean + stddev * rng.gaussian(s, a, b, c), lo, hi);
    }
  }
};

/// Distributions for every stochastic field of a NonidealityProfile.
struct ProfileSpec {
  Dist alpha_a = Dist::constant(1.0);   // per column, per line
  Dist beta_a = Dist::constant(0.0);    // volts
  Dist alpha_d = Dist::constant(1.0);   // one ADC serves the whole array
  Dist beta_d = Dist::constant(0.0);    // codes
  Dist r_driver = Dist::constant(0.0);  // ohms
  Dist r_wire_x = Dist::constant(0.0);  // ohms per cell pitch along rows
  Dist r_wire_y = Dist::constant(0.0);  // ohms per cell pitch along columns
  Dist mismatch_sigma = Dist::constant(0.0);  // std of per-cell relative factors
  Dist dac_inl_amp = Dist::constant(0.0);     // volts
  Dist adc_inl_amp = Dist::constant(0.0);     // codes, converter INL amplitude
  Dist noise_sigma = Dist::constant(0.0);     // volts RMS, output referred
  Dist drift_rate = Dist::constant(0.0);      // volts per inference

  /// All-zero errors.
  static ProfileSpec ideal() { return ProfileSpec{}; }

  /// Shipped defaults, sized so the uncalibrated per-column compute SNR lands
  /// in the 12-18 dB band and calibration recovers 18-24 dB.
  static ProfileSpec defaults() {
    ProfileSpec s;
    s.alpha_a = Dist::sym_uniform(1.0, 0.115, 0.215);
    s.beta_a = Dist::normal(0.0, 0.001, -0.0035, 0.0035);
    s.alpha_d = Dist::normal(1.0, 0.003, 0.99, 1.01);
    s.beta_d = Dist::normal(0.0, 0.3, -1.0, 1.0);
    s.r_driver = Dist::constant(100.0);
    s.r_wire_x = Dist::constant(20.0);
    s.r_wire_y = Dist::constant(10.0);
    s.mismatch_sigma = Dist::constant(0.015);
    s.dac_inl_amp = Dist::constant(0.0012);
    s.adc_inl_amp = Dist::constant(1.4);
    s.noise_sigma = Dist::constant(0.0003);
    s.drift_rate = Dist::constant(0.0);
    return s;
  }

  void validate() const {
    for (const Dist* d : {&alpha_a, &beta_a, &alpha_d, &beta_d, &r_driver,
                          &r_wire_x, &r_wire_y, &mismatch_sigma, &dac_inl_amp,
                          &adc_inl_amp, &noise_sigma, &drift_rate})
      d->validate();
    if (alpha_a.kind == Dist::Kind::normal && alpha_a.lo <= 0)
      throw std::invalid_argument("alpha_a bounds must keep gains positive");
    if (alpha_d.kind == Dist::Kind::normal && alpha_d.lo <= 0)
      throw std::invalid_argument("alpha_d bounds must keep gains positive");
    if (mismatch_sigma.lo < 0 || dac_inl_amp.lo < 0 || noise_sigma.lo < 0 ||
        r_driver.lo < 0 || r_wire_x.lo < 0 || r_wire_y.lo < 0)
      throw std::invalid_argument("scale parameters must be >= 0");
  }
};

/// One sampled realization of the error sources. Regenerating from the same
/// (spec, seed) reproduces it exactly. Immutable after sampling.
struct NonidealityProfile {
  int rows = 0;
  int cols = 0;
  std::vector<std::array<double, 2>> alpha_a;  // [col][line]
  std::vector<std::array<double, 2>> beta_a;   // volts
  double alpha_d = 1.0;
  double beta_d = 0.0;  // codes
  double r_driver = 0.0;
  double r_wire_x = 0.0;
  double r_wire_y = 0.0;
  std::vector<double> mismatch;  // rows*cols relative factors
  std::vector<double> inl_amp;   // per row, volts
  std::vector<double> inl_freq;  // per row, cycles over the signed range
  std::vector<double> inl_phase;
  // Converter INL: one smooth deviation curve in code units, shared by all
  // columns (the array time-multiplexes a single flash ADC). The affine
  // alpha_d/beta_d terms own the converter's linear error, so the stored
  // curve is affine-free by construction: it is the nonlinear remainder a
  // gain/offset calibration cannot touch.
  double adc_inl_amp = 0.0;  // scale applied to the harmonics, see sample_profile
  std::array<double, 3> adc_inl_coeff{0.0, 0.0, 0.0};
  std::array<double, 3> adc_inl_phase{0.0, 0.0, 0.0};
  double adc_inl_a0 = 0.0;  // affine part removed from the harmonic mix
  double adc_inl_a1 = 0.0;
  double noise_sigma = 0.0;
  double drift_rate = 0.0;
  std::uint64_t seed = 0;

  static NonidealityProfile ideal(const ArrayConfig& cfg) {
    NonidealityProfile p;
    p.rows = cfg.rows;
    p.cols = cfg.cols;
    p.alpha_a.assign(static_cast<std::size_t>(cfg.cols), {1.0, 1.0});
    p.beta_a.assign(static_cast<std::size_t>(cfg.cols), {0.0, 0.0});
    p.mismatch.assign(static_cast<std::size_t>(cfg.rows) * cfg.cols, 0.0);
    p.inl_amp.assign(static_cast<std::size_t>(cfg.rows), 0.0);
    p.inl_freq.assign(static_cast<std::size_t>(cfg.rows), 1.0);
    p.inl_phase.assign(static_cast<std::size_t>(cfg.rows), 0.0);
    return p;
  }

  bool is_ideal() const {
    if (alpha_d != 1.0 || beta_d != 0.0 || noise_sigma != 0.0 || drift_rate != 0.0)
      return false;
    if (adc_inl_amp != 0.0) return false;
    if (r_driver != 0.0 || r_wire_x != 0.0 || r_wire_y != 0.0) return false;
    for (const auto& a : alpha_a)
      if (a[0] != 1.0 || a[1] != 1.0) return false;
    for (const auto& b : beta_a)
      if (b[0] != 0.0 || b[1] != 0.0) return false;
    for (double m : mismatch)
      if (m != 0.0) return false;
    for (double a : inl_amp)
      if (a != 0.0) return false;
    return true;
  }

  double mismatch_at(int row, int col) const {
    return mismatch[static_cast<std::size_t>(row) * cols + col];
  }

  /// Deterministic per-row DAC INL: a smooth bounded perturbation of the
  /// transfer curve, evaluated at the signed code fraction x in [-1, 1].
  double dac_error(int row, double x) const {
    const double a = inl_amp[static_cast<std::size_t>(row)];
    if (a == 0.0) return 0.0;
    return a * std::sin(std::numbers::pi * inl_freq[static_cast<std::size_t>(row)] * x +
                        inl_phase[static_cast<std::size_t>(row)]);
  }

  /// Converter INL at normalized code position x in [0, 1].
  double adc_inl(double x) const {
    if (adc_inl_amp == 0.0) return 0.0;
    double v = 0.0;
    for (int k = 0; k < 3; ++k)
      v += adc_inl_coeff[static_cast<std::size_t>(k)] *
           std::sin(std::numbers::pi * (k + 1) * x +
                    adc_inl_phase[static_cast<std::size_t>(k)]);
    return adc_inl_amp * (v - adc_inl_a0 - adc_inl_a1 * x);
  }

  /// Output-referred noise sample for one column readout at one cycle.
  double noise_sample(int column, std::uint64_t cycle) const {
    if (noise_sigma == 0.0) return 0.0;
    return noise_sigma *
           CounterRng(seed).gaussian(Stream::noise, static_cast<std::uint64_t>(column), cycle);
  }

  /// Slow offset wander with random-walk-like increments (band-limited dyadic
  /// construction; increment std over D cycles scales ~ sqrt(D)). O(log cycle)
  /// and random access, so parallel evaluation stays deterministic.
  double drift_offset(int column, std::uint64_t cycle) const {
    if (drift_rate == 0.0) return 0.0;
    const CounterRng rng(seed);
    double acc = 0.0;
    double scale = 1.0;
    for (int octave = 0; octave < 40; ++octave) {
      acc += scale * rng.gaussian(Stream::drift, static_cast<std::uint64_t>(column),
                                  static_cast<std::uint64_t>(octave), cycle >> octave);
      scale *= std::numbers::sqrt2;
      if ((cycle >> octave) == 0) break;
    }
    return drift_rate * acc;
  }
};

inline NonidealityProfile sample_profile(const ProfileSpec& spec,
                                         const ArrayConfig& cfg,
                                         std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  CounterRng rng(seed);
  NonidealityProfile p = NonidealityProfile::ideal(cfg);
  p.seed = seed;
  for (int c = 0; c < cfg.cols; ++c) {
    for (int l = 0; l < 2; ++l) {
      p.alpha_a[c][l] = spec.alpha_a.sample(rng, Stream::alpha_a, c, l);
      p.beta_a[c][l] = spec.beta_a.sample(rng, Stream::beta_a, c, l);
    }
  }
  p.alpha_d = spec.alpha_d.sample(rng, Stream::alpha_d);
  p.beta_d = spec.beta_d.sample(rng, Stream::beta_d);
  p.r_driver = std::max(0.0, spec.r_driver.sample(rng, Stream::parasitics, 0));
  p.r_wire_x = std::max(0.0, spec.r_wire_x.sample(rng, Stream::parasitics, 1));
  p.r_wire_y = std::max(0.0, spec.r_wire_y.sample(rng, Stream::parasitics, 2));
  const double sigma_g = std::max(0.0, spec.mismatch_sigma.sample(rng, Stream::mismatch, 1u << 30));
  for (int i = 0; i < cfg.rows; ++i)
    for (int j = 0; j < cfg.cols; ++j)
      p.mismatch[static_cast<std::size_t>(i) * cfg.cols + j] =
          sigma_g == 0.0 ? 0.0 : sigma_g * rng.gaussian(Stream::mismatch, i, j);
  const double inl = std::max(0.0, spec.dac_inl_amp.sample(rng, Stream::dac_inl, 1u << 30));
  for (int i = 0; i < cfg.rows; ++i) {
    p.inl_amp[i] = inl * rng.uniform(Stream::dac_inl, i, 0);
    p.inl_freq[i] = 1.0 + 2.0 * rng.uniform(Stream::dac_inl, i, 1);
    p.inl_phase[i] = 2.0 * std::numbers::pi * rng.uniform(Stream::dac_inl, i, 2);
  }
  const double adc_inl_rms =
      std::max(0.0, spec.adc_inl_amp.sample(rng, Stream::dac_inl, 1u << 29));
  if (adc_inl_rms > 0.0) {
    // Random harmonic mix, then normalized so the component a gain/offset
    // calibration cannot absorb (the post-affine residual) has exactly the
    // configured RMS. Otherwise the error floor would swing wildly between
    // seeds whose curves happen to be nearly affine.
    std::array<double, 3> raw{};
    for (int k = 0; k < 3; ++k) {
      raw[static_cast<std::size_t>(k)] =
          2.0 * rng.uniform(Stream::dac_inl, 1u << 29, k, 0) - 1.0;
      p.adc_inl_phase[static_cast<std::size_t>(k)] =
          2.0 * std::numbers::pi * rng.uniform(Stream::dac_inl, 1u << 29, k, 1);
    }
    p.adc_inl_amp = 1.0;
    p.adc_inl_coeff = raw;
    const int grid = 64;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::array<double, 64> f{};
    for (int i = 0; i < grid; ++i) {
      const double x = static_cast<double>(i) / (grid - 1);
      f[static_cast<std::size_t>(i)] = p.adc_inl(x);
      sx += x;
      sy += f[static_cast<std::size_t>(i)];
      sxx += x * x;
      sxy += x * f[static_cast<std::size_t>(i)];
    }
    const double n = grid;
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double ss = 0;
    for (int i = 0; i < grid; ++i) {
      const double x = static_cast<double>(i) / (grid - 1);
      const double r = f[static_cast<std::size_t>(i)] - (intercept + slope * x);
      ss += r * r;
    }
    const double resid_rms = std::sqrt(ss / n);
    p.adc_inl_a0 = intercept;
    p.adc_inl_a1 = slope;
    p.adc_inl_amp = resid_rms > 1e-12 ? adc_inl_rms / resid_rms : 0.0;
  }
  p.noise_sigma = std::max(0.0, spec.noise_sigma.sample(rng, Stream::noise, 1u << 30));
  p.drift_rate = std::max(0.0, spec.drift_rate.sample(rng, Stream::drift, 1u << 30));
  return p;
}

/// First-order parasitics model, precomputed per cell. input_factor is the
/// divider each cell's (V_DAC - V_BIAS) sees through the driver and row wire:
/// R_U / (R_U + R_D + j*r_x). regulation_ohms is the coefficient i*r_y that
/// scales the column-line current estimate into a summation-node voltage
/// error. Both are state-independent; the exact nodal solve in nodal.hpp
/// bounds the approximation in tests.
struct AttenuationMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> input_factor;     // [row*cols + col]
  std::vector<double> regulation_ohms;  // [row*cols + col]

  double factor(int row, int col) const {
    return input_factor[static_cast<std::size_t>(row) * cols + col];
  }
  double reg_ohms(int row, int col) const {
    return regulation_ohms[static_cast<std::size_t>(row) * cols + col];
  }
};

inline AttenuationMap attenuation_map(const ArrayConfig& cfg, double r_driver,
                                      double r_wire_x, double r_wire_y) {
  if (r_driver < 0 || r_wire_x < 0 || r_wire_y < 0)
    throw std::invalid_argument("parasitic resistances must be >= 0");
  AttenuationMap m;
  m.rows = cfg.rows;
  m.cols = cfg.cols;
  m.input_factor.resize(static_cast<std::size_t>(cfg.rows) * cfg.cols);
  m.regulation_ohms.resize(static_cast<std::size_t>(cfg.rows) * cfg.cols);
  for (int i = 0; i < cfg.rows; ++i) {
    for (int j = 0; j < cfg.cols; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * cfg.cols + j;
      m.input_factor[k] = cfg.r_unit / (cfg.r_unit + r_driver + j * r_wire_x);
      m.regulation_ohms[k] = i * r_wire_y;
    }
  }
  return m;
}

}  // namespace cimsim
