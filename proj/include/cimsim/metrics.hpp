#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/bisc.hpp"
#include "cimsim/core.hpp"

namespace cimsim {

inline double enob_from_db(double snr_db) { return (snr_db - 1.76) / 6.02; }
inline double snr_db_from_enob(double enob) { return enob * 6.02 + 1.76; }

/// Per-column compute-SNR entry. Variances use the population (1/n)
/// convention. Because the variance-based definition is blind to constant
/// offsets, the mean error and an offset-sensitive variant (error variance
/// replaced by mean-square error) are reported alongside; the latter is a
/// diagnostic only.
struct SnrEntry {
  int column = 0;
  double snr_linear = 0.0;
  double snr_db = 0.0;
  double enob = 0.0;
  double err_mean = 0.0;  // codes
  double err_std = 0.0;
  double snr_mse_db = 0.0;
};

namespace detail {
inline double population_var(std::span<const double> x, double mean) {
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size());
}
inline double mean_of(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v;
  return acc / static_cast<double>(x.size());
}
}  // namespace detail

/// SNR = var(Q_nom) / var(e) with e = Q_nom - Q_act. Exact agreement (or a
/// pure constant offset) reports the +infinity sentinel.
inline SnrEntry compute_snr(std::span<const double> q_nom,
                            std::span<const double> q_act) {
  if (q_nom.size() < 2 || q_nom.size() != q_act.size())
    throw std::invalid_argument("compute_snr: need >= 2 paired samples");
  const double nom_mean = detail::mean_of(q_nom);
  const double nom_var = detail::population_var(q_nom, nom_mean);
  if (nom_var == 0.0)
    throw std::invalid_argument("compute_snr: nominal outputs have zero variance");

  std::vector<double> e(q_nom.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = q_nom[i] - q_act[i];
  const double e_mean = detail::mean_of(e);
  const double e_var = detail::population_var(e, e_mean);
  const double e_ms = e_var + e_mean * e_mean;

  SnrEntry r;
  r.err_mean = e_mean;
  r.err_std = std::sqrt(e_var);
  if (e_var == 0.0) {
    r.snr_linear = std::numeric_limits<double>::infinity();
    r.snr_db = std::numeric_limits<double>::infinity();
    r.enob = std::numeric_limits<double>::infinity();
  } else {
    r.snr_linear = nom_var / e_var;
    r.snr_db = 10.0 * std::log10(r.snr_linear);
    r.enob = enob_from_db(r.snr_db);
  }
  r.snr_mse_db = e_ms == 0.0 ? std::numeric_limits<double>::infinity()
                             : 10.0 * std::log10(nom_var / e_ms);
  return r;
}

/// Per-column gain/offset extraction for reporting; same estimators as the
/// calibration fit.
inline FitResult extract_column_errors(std::span<const double> q_nom,
                                       std::span<const double> q_act) {
  return least_squares_fit(q_nom, q_act);
}

/// Normalized throughput in 1b-GOPS: (2*N*M MACs-as-OPS) x (input bits x
/// weight bits, sign included) x inference frequency.
inline double throughput_1b_gops(const ArrayConfig& cfg) {
  const double ops = 2.0 * cfg.rows * cfg.cols;
  const double bit_product =
      static_cast<double>(cfg.input_bits + 1) * (cfg.weight_bits + 1);
  return ops * bit_product * cfg.f_inference / 1e9;
}

/// 1b-TOPS/W from a 1b-GOPS throughput and a power draw in watts.
inline double energy_efficiency_tops_w(double throughput_gops, double power_watts) {
  if (power_watts <= 0)
    throw std::invalid_argument("energy_efficiency: power must be positive");
  return throughput_gops / (1000.0 * power_watts);
}

/// Workload used for SNR evaluation.
///  - full_scale: per instance, one random signed code drives every row with
///    full-scale weights on one randomly chosen line. Exercises the whole
///    code range, so the nominal output variance supports SNR readings above
///    the quantization floor.
///  - uniform: inputs and weights drawn independently uniformly over all
///    valid codes. Random-walk cancellation concentrates the nominal output
///    mid-range (std ~1.7 codes at the default geometry), which caps
///    measurable SNR near 15 dB with a 6-bit ADC; selectable for experiments.
enum class SnrStimulus { full_scale, uniform };

inline const char* stimulus_name(SnrStimulus s) {
  return s == SnrStimulus::full_scale ? "full_scale" : "uniform";
}

struct SnrSweep {
  std::vector<double> q_nom;                  // per instance (same all columns)
  std::vector<std::vector<double>> q_act;     // [column][instance]
  std::vector<std::vector<double>> q_nom_col; // [column][instance]
};

/// Runs `count` stimulus instances through the array and collects nominal and
/// measured codes per column. Cycles are assigned from `cycle_base` by
/// instance index, so results are independent of evaluation order.
inline SnrSweep snr_sweep(const Simulator& sim, SnrStimulus stimulus, int count,
                          std::uint64_t stimulus_seed, std::uint64_t cycle_base) {
  if (count < 2) throw std::invalid_argument("snr_sweep: need >= 2 instances");
  const ArrayConfig& cfg = sim.cfg;
  const CounterRng rng(stimulus_seed);
  SnrSweep sweep;
  sweep.q_act.assign(static_cast<std::size_t>(cfg.cols), {});
  sweep.q_nom_col.assign(static_cast<std::size_t>(cfg.cols), {});
  for (auto& v : sweep.q_act) v.reserve(static_cast<std::size_t>(count));
  for (auto& v : sweep.q_nom_col) v.reserve(static_cast<std::size_t>(count));

  std::vector<InputCode> inputs(static_cast<std::size_t>(cfg.rows));
  WeightMatrix w(cfg.rows, cfg.cols);
  for (int t = 0; t < count; ++t) {
    const std::uint64_t ti = static_cast<std::uint64_t>(t);
    if (stimulus == SnrStimulus::full_scale) {
      const int mag = static_cast<int>(rng.bits(Stream::stimulus, ti, 0) %
                                       (cfg.input_fullscale() + 1));
      const int sign = rng.uniform(Stream::stimulus, ti, 1) < 0.5 ? -1 : +1;
      const bool pos_line = rng.uniform(Stream::stimulus, ti, 2) < 0.5;
      const InputCode code{mag, sign};
      inputs.assign(inputs.size(), code);
      const WeightCode wc = pos_line
                                ? WeightCode::positive(cfg.weight_fullscale())
                                : WeightCode::negative(cfg.weight_fullscale());
      for (auto& cell : w.w) cell = wc;
    } else {
      for (int i = 0; i < cfg.rows; ++i) {
        const std::uint64_t ii = static_cast<std::uint64_t>(i);
        inputs[static_cast<std::size_t>(i)] = InputCode{
            static_cast<int>(rng.bits(Stream::stimulus, ti, ii, 0) %
                             (cfg.input_fullscale() + 1)),
            rng.uniform(Stream::stimulus, ti, ii, 1) < 0.5 ? -1 : +1};
        for (int j = 0; j < cfg.cols; ++j) {
          const int mag = static_cast<int>(rng.bits(Stream::stimulus, ti, ii,
                                                    100 + static_cast<std::uint64_t>(j)) %
                                           (cfg.weight_fullscale() + 1));
          const double pick =
              rng.uniform(Stream::stimulus, ti, ii, 200 + static_cast<std::uint64_t>(j));
          WeightCode wc = WeightCode::idle();
          if (pick < 1.0 / 3.0)
            wc = WeightCode::positive(mag);
          else if (pick < 2.0 / 3.0)
            wc = WeightCode::negative(mag);
          w.at(i, j) = wc;
        }
      }
    }
    const std::vector<ColumnSample> samples = sim.eval_at(inputs, w, cycle_base + ti);
    for (int j = 0; j < cfg.cols; ++j) {
      std::vector<WeightCode> col = w.column(j);
      const double q_nom =
          mac_ideal(inputs, col, cfg, sim.cal.v_adc_low, sim.cal.v_adc_high);
      sweep.q_nom_col[static_cast<std::size_t>(j)].push_back(q_nom);
      sweep.q_act[static_cast<std::size_t>(j)].push_back(
          samples[static_cast<std::size_t>(j)].adc_code);
      if (j == 0) sweep.q_nom.push_back(q_nom);
    }
  }
  return sweep;
}

/// Per-column SNR entries for a collected sweep.
inline std::vector<SnrEntry> snr_per_column(const SnrSweep& sweep) {
  std::vector<SnrEntry> out;
  out.reserve(sweep.q_act.size());
  for (std::size_t j = 0; j < sweep.q_act.size(); ++j) {
    SnrEntry e = compute_snr(sweep.q_nom_col[j], sweep.q_act[j]);
    e.column = static_cast<int>(j);
    out.push_back(e);
  }
  return out;
}

}  // namespace cimsim
