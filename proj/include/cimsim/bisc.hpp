#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/core.hpp"

namespace cimsim {

/// Finite-resolution trim hardware: a 128-step digital potentiometer spanning
/// [0.5, 1.5] x nominal R_SA in the feedback path, and a 6-bit calibration
/// DAC over the input reference span. `continuous` bypasses both grids (used
/// by the exact-inversion checks).
struct TrimModel {
  int pot_steps = 128;
  double pot_lo_frac = 0.5;
  double pot_hi_frac = 1.5;
  int cal_dac_bits = 6;
  double cal_dac_lo = 0.2;
  double cal_dac_hi = 0.6;
  bool continuous = false;

  static TrimModel for_config(const ArrayConfig& cfg) {
    TrimModel t;
    t.cal_dac_lo = cfg.v_in_low;
    t.cal_dac_hi = cfg.v_in_high;
    return t;
  }

  double pot_value(const ArrayConfig& cfg, int code) const {
    const double r_nom = cfg.r_sa_nominal();
    const double step = (pot_hi_frac - pot_lo_frac) * r_nom / (pot_steps - 1);
    return pot_lo_frac * r_nom + code * step;
  }
  double dac_value(int code) const {
    const int fs = (1 << cal_dac_bits) - 1;
    return cal_dac_lo + code * (cal_dac_hi - cal_dac_lo) / fs;
  }
};

struct BiscParams {
  int test_points = 8;        // Z
  int repeats = 16;           // readings averaged per test point
  double guard_margin = 0.05; // ADC reference widening during characterization
  int passes = 2;             // characterize/correct cycles (see run_bisc)
  bool keep_guard_refs = false;
  // Characterize on the pre-rounding ADC value instead of the integer code.
  // Only meaningful for algebraic inversion checks; hardware reads codes.
  bool exact_readout = false;
  // Re-measure the corrected chain once and record the residual response in
  // the calibration state, for digital fine compensation below the trim LSBs.
  bool measure_residual = true;
  TrimModel trims;
};

/// Characterization test set: full-scale weights on one line and a common
/// stepped input per point, plus the nominal outputs for the active ADC refs.
struct TestVectors {
  std::vector<InputCode> inputs;     // one per test point, applied to all rows
  std::vector<WeightCode> weights;   // one per row
  std::vector<double> q_nom;         // nominal output per point
};

/// Z equally spaced signed input codes across the full dynamic range, all
/// cells at full-scale magnitude on the requested line.
inline TestVectors build_test_vectors(int z, Line line, const ArrayConfig& cfg,
                                      double ref_low, double ref_high) {
  if (line != Line::positive && line != Line::negative)
    throw std::invalid_argument("build_test_vectors: line must be positive or negative");
  if (z < 2 || z > (1 << cfg.input_bits))
    throw std::invalid_argument("build_test_vectors: test-point count out of range");
  TestVectors tv;
  const int fs = cfg.input_fullscale();
  const WeightCode w = line == Line::positive
                           ? WeightCode::positive(cfg.weight_fullscale())
                           : WeightCode::negative(cfg.weight_fullscale());
  tv.weights.assign(static_cast<std::size_t>(cfg.rows), w);
  std::vector<InputCode> row_inputs(static_cast<std::size_t>(cfg.rows));
  for (int k = 0; k < z; ++k) {
    const double v = -fs + 2.0 * fs * k / (z - 1);
    const InputCode code = InputCode::from_signed(static_cast<int>(std::lround(v)));
    tv.inputs.push_back(code);
    row_inputs.assign(static_cast<std::size_t>(cfg.rows), code);
    tv.q_nom.push_back(mac_ideal(row_inputs, tv.weights, cfg, ref_low, ref_high));
  }
  return tv;
}

inline TestVectors build_test_vectors(int z, Line line, const ArrayConfig& cfg) {
  return build_test_vectors(z, line, cfg, cfg.v_adc_low, cfg.v_adc_high);
}

struct FitResult {
  double g_tot = 1.0;
  double eps_tot = 0.0;
};

/// Closed-form least-squares estimators over Z test points:
///   g   = (Z*sum(xy) - sum(x)*sum(y)) / (Z*sum(x^2) - sum(x)^2)
///   eps = (sum(y) - g*sum(x)) / Z
inline FitResult least_squares_fit(std::span<const double> q_nom,
                                   std::span<const double> q_act) {
  const std::size_t z = q_nom.size();
  if (z < 2 || q_act.size() != z)
    throw std::invalid_argument("least_squares_fit: need >= 2 paired points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < z; ++k) {
    sx += q_nom[k];
    sy += q_act[k];
    sxx += q_nom[k] * q_nom[k];
    sxy += q_nom[k] * q_act[k];
  }
  const double zn = static_cast<double>(z);
  const double denom = zn * sxx - sx * sx;
  if (std::abs(denom) < 1e-9 * std::max(1.0, zn * sxx))
    throw std::invalid_argument("least_squares_fit: nominal outputs have no spread");
  FitResult r;
  r.g_tot = (zn * sxy - sx * sy) / denom;
  r.eps_tot = (sy - r.g_tot * sx) / zn;
  return r;
}

struct AnalogErrors {
  double alpha_a = 1.0;
  double beta_a = 0.0;
};

/// De-embeds the independently characterized ADC from the total-chain fit:
/// alpha_A = g_tot/alpha_D, beta_A = (eps_tot - beta_D)/(alpha_D*C_ADC).
inline AnalogErrors extract_analog_errors(double g_tot, double eps_tot,
                                          double alpha_d, double beta_d,
                                          double c_adc) {
  if (alpha_d <= 0)
    throw std::invalid_argument("extract_analog_errors: alpha_d must be positive");
  return AnalogErrors{g_tot / alpha_d, (eps_tot - beta_d) / (alpha_d * c_adc)};
}

struct TrimTargets {
  double r_sa = 0.0;   // ohms, continuous target
  double v_cal = 0.0;  // volts, continuous target
  bool r_out_of_range = false;
  bool v_out_of_range = false;
};

/// Correction targets from the extracted analog errors, applied to the
/// currently realized trims: R_SA' = R_SA/alpha_A, V_CAL' = V_CAL - beta_A.
/// Out-of-range targets are flagged; quantization clamps them.
inline TrimTargets compute_corrections(double alpha_a, double beta_a,
                                       const ArrayConfig& cfg,
                                       const LineTrim& current,
                                       const TrimModel& trims) {
  if (alpha_a <= 0)
    throw std::invalid_argument("compute_corrections: alpha_a must be positive");
  TrimTargets t;
  t.r_sa = current.r_sa / alpha_a;
  t.v_cal = current.v_cal - beta_a;
  const double r_nom = cfg.r_sa_nominal();
  t.r_out_of_range =
      t.r_sa < trims.pot_lo_frac * r_nom || t.r_sa > trims.pot_hi_frac * r_nom;
  t.v_out_of_range = t.v_cal < trims.cal_dac_lo || t.v_cal > trims.cal_dac_hi;
  return t;
}

/// Rounds continuous targets to the nearest potentiometer step and
/// calibration-DAC code (clamping at the range ends) and records the realized
/// values. In continuous mode the targets pass through unchanged.
inline LineTrim quantize_trims(const TrimTargets& targets, const ArrayConfig& cfg,
                               const TrimModel& trims) {
  LineTrim out;
  out.calibrated = true;
  if (trims.continuous) {
    out.r_sa = targets.r_sa;
    out.v_cal = targets.v_cal;
    return out;
  }
  const double r_nom = cfg.r_sa_nominal();
  const double pot_step = (trims.pot_hi_frac - trims.pot_lo_frac) * r_nom /
                          (trims.pot_steps - 1);
  int pot = static_cast<int>(std::lround((targets.r_sa - trims.pot_lo_frac * r_nom) / pot_step));
  pot = std::clamp(pot, 0, trims.pot_steps - 1);
  out.pot_code = pot;
  out.r_sa = trims.pot_value(cfg, pot);

  const int dac_fs = (1 << trims.cal_dac_bits) - 1;
  const double dac_lsb = (trims.cal_dac_hi - trims.cal_dac_lo) / dac_fs;
  int dac = static_cast<int>(std::lround((targets.v_cal - trims.cal_dac_lo) / dac_lsb));
  dac = std::clamp(dac, 0, dac_fs);
  out.dac_code = dac;
  out.v_cal = trims.dac_value(dac);
  return out;
}

/// Widens the ADC references for characterization so residual errors stay in
/// the converter's linear region: low scaled by (1 - margin), high by
/// (1 + margin).
inline std::pair<double, double> adc_guard(double ref_low, double ref_high,
                                           double margin) {
  if (margin < 0.0 || margin > 0.2)
    throw std::invalid_argument("adc_guard: margin must be within [0, 0.2]");
  return {ref_low * (1.0 - margin), ref_high * (1.0 + margin)};
}

struct CharacterizationResult {
  int column = 0;
  Line line = Line::positive;
  int pass = 0;
  double g_tot = 1.0;
  double eps_tot = 0.0;    // codes
  double alpha_a = 1.0;
  double beta_a = 0.0;     // volts
  double residual_rms = 0.0;  // codes, fit residual
  int points_used = 0;     // Z minus dropped points
  int repeats = 0;
  int clipped_readings = 0;
  bool failed = false;
};

struct BiscOutcome {
  CalibrationState state;
  std::vector<CharacterizationResult> results;  // all passes, final pass last
};

/// Built-in self-calibration. Per pass, per column, per line: apply the
/// stepped full-scale test vectors under widened ADC references, average
/// `repeats` readings per point (clipped readings are dropped and counted),
/// fit the total-chain gain/offset, de-embed the stored ADC parameters,
/// retarget the line's trims and write them back.
///
/// The closed-form extraction attributes the (V_CAL - ref_low)*(1 - alpha_A)
/// interaction term to the offset estimate, so a single pass leaves a
/// residual offset whenever the gain error is nonzero. The default two passes
/// converge exactly for affine errors: pass 1 zeroes the gain error, after
/// which pass 2's offset extraction is bias-free. Extra passes are no-ops up
/// to trim quantization, which also makes the routine idempotent.
///
/// Lines whose characterization clips more than half of its test points are
/// marked failed and reset to nominal trims. ADC references are restored
/// after calibration unless `keep_guard_refs` is set.
inline BiscOutcome run_bisc(Simulator& sim, const BiscParams& params) {
  const ArrayConfig& cfg = sim.cfg;
  if (params.test_points < 2 || params.test_points > (1 << cfg.input_bits))
    throw std::invalid_argument("run_bisc: test-point count out of range");
  if (params.repeats < 1) throw std::invalid_argument("run_bisc: repeats must be >= 1");
  if (params.passes < 1) throw std::invalid_argument("run_bisc: passes must be >= 1");

  // ADC parameter store: the converter is characterized ahead of time, so the
  // routine knows its gain/offset exactly.
  const double alpha_d = sim.profile.alpha_d;
  const double beta_d = sim.profile.beta_d;

  BiscOutcome out;
  const std::pair<double, double> guard =
      adc_guard(cfg.v_adc_low, cfg.v_adc_high, params.guard_margin);
  const double guard_lo = guard.first;
  const double guard_hi = guard.second;
  sim.cal.v_adc_low = guard_lo;
  sim.cal.v_adc_high = guard_hi;
  const double c_adc = cfg.adc_gain(guard_lo, guard_hi);

  std::vector<InputCode> row_inputs(static_cast<std::size_t>(cfg.rows));
  const auto characterize = [&](int col, Line line, int pass) {
    const TestVectors tv =
        build_test_vectors(params.test_points, line, cfg, guard_lo, guard_hi);
    CharacterizationResult cr;
    cr.column = col;
    cr.line = line;
    cr.pass = pass;
    cr.repeats = params.repeats;
    std::vector<double> q_nom, q_act;
    int dropped_points = 0;
    for (std::size_t k = 0; k < tv.inputs.size(); ++k) {
      row_inputs.assign(static_cast<std::size_t>(cfg.rows), tv.inputs[k]);
      double acc = 0.0;
      int good = 0;
      for (int r = 0; r < params.repeats; ++r) {
        const ColumnSample s = sim.step_column(col, row_inputs, tv.weights);
        if (s.clipped) {
          ++cr.clipped_readings;
        } else {
          acc += params.exact_readout ? s.code_real : s.adc_code;
          ++good;
        }
      }
      if (good == 0) {
        ++dropped_points;
        continue;
      }
      q_nom.push_back(tv.q_nom[k]);
      q_act.push_back(acc / good);
    }
    cr.points_used = static_cast<int>(q_nom.size());
    if (dropped_points * 2 > params.test_points || cr.points_used < 2) {
      cr.failed = true;
      return cr;
    }
    const FitResult fit = least_squares_fit(q_nom, q_act);
    cr.g_tot = fit.g_tot;
    cr.eps_tot = fit.eps_tot;
    double ss = 0.0;
    for (std::size_t k = 0; k < q_nom.size(); ++k) {
      const double r = q_act[k] - (fit.g_tot * q_nom[k] + fit.eps_tot);
      ss += r * r;
    }
    cr.residual_rms = std::sqrt(ss / static_cast<double>(q_nom.size()));
    const AnalogErrors errors =
        extract_analog_errors(fit.g_tot, fit.eps_tot, alpha_d, beta_d, c_adc);
    cr.alpha_a = errors.alpha_a;
    cr.beta_a = errors.beta_a;
    cr.failed = errors.alpha_a <= 0;
    return cr;
  };

  for (int pass = 0; pass < params.passes; ++pass) {
    for (int col = 0; col < cfg.cols; ++col) {
      for (Line line : {Line::positive, Line::negative}) {
        CharacterizationResult cr = characterize(col, line, pass);
        if (cr.failed) {
          LineTrim nominal;
          nominal.r_sa = cfg.r_sa_nominal();
          nominal.v_cal = cfg.v_bias;
          nominal.failed = true;
          sim.cal.at(col, line) = nominal;
          out.results.push_back(cr);
          continue;
        }
        const TrimTargets targets = compute_corrections(
            cr.alpha_a, cr.beta_a, cfg, sim.cal.at(col, line), params.trims);
        LineTrim trim = quantize_trims(targets, cfg, params.trims);
        trim.failed = false;
        sim.cal.at(col, line) = trim;
        out.results.push_back(cr);
      }
    }
  }

  // Measure-only verification pass: record what is left of the chain response
  // after the trims, so digital readouts can compensate below the trim LSBs.
  sim.cal.adc_alpha_d = alpha_d;
  sim.cal.adc_beta_d = beta_d;
  if (params.measure_residual) {
    for (int col = 0; col < cfg.cols; ++col) {
      for (Line line : {Line::positive, Line::negative}) {
        const CharacterizationResult cr = characterize(col, line, params.passes);
        ResidualResponse rr;
        if (!cr.failed) {
          rr.gain = cr.alpha_a;
          rr.v_zero_offset = cr.beta_a;
        }
        sim.cal.residual[static_cast<std::size_t>(col)][static_cast<std::size_t>(line)] = rr;
      }
    }
  }

  if (!params.keep_guard_refs) {
    sim.cal.v_adc_low = cfg.v_adc_low;
    sim.cal.v_adc_high = cfg.v_adc_high;
  }
  out.state = sim.cal;
  return out;
}

/// Convenience wrapper matching the routine's external signature: builds the
/// simulator, runs calibration, returns state and characterization records.
inline BiscOutcome run_bisc(const ArrayConfig& cfg,
                            const NonidealityProfile& profile, int test_points,
                            int repeats) {
  Simulator sim(cfg, profile);
  BiscParams params;
  params.test_points = test_points;
  params.repeats = repeats;
  params.trims = TrimModel::for_config(cfg);
  return run_bisc(sim, params);
}

}  // namespace cimsim
