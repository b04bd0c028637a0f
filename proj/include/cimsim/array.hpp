#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cimsim/core.hpp"
#include "cimsim/profile.hpp"

namespace cimsim {

/// Input DAC transfer: V_DAC = V_BIAS - s*(d/2^B_D)*(V_BIAS - V_INL), odd
/// symmetric about the bias level, endpoints at the references. With a
/// profile, the row's INL perturbation is added and the output clamps to the
/// reference span.
inline double input_dac_transfer(const InputCode& code, const ArrayConfig& cfg,
                                 const NonidealityProfile* profile = nullptr,
                                 int row = 0) {
  code.validate(cfg);
  const double span = cfg.v_bias - cfg.v_in_low;
  const double fraction =
      static_cast<double>(code.magnitude) / (1 << cfg.input_bits);
  const double polarity = cfg.dac_positive_toward_low ? 1.0 : -1.0;
  double v = cfg.v_bias - polarity * code.sign * fraction * span;
  if (profile != nullptr) {
    v += profile->dac_error(row, polarity * code.sign * fraction);
    v = std::clamp(v, cfg.v_in_low, cfg.v_in_high);
  }
  return v;
}

struct CellCurrents {
  double positive = 0.0;
  double negative = 0.0;
  double net() const { return positive - negative; }
};

namespace detail {
inline double cell_current(double dv, int magnitude, const ArrayConfig& cfg,
                           double mismatch) {
  return dv / cfg.r_unit *
         (static_cast<double>(magnitude) / (1 << cfg.weight_bits)) *
         (1.0 + mismatch);
}
}  // namespace detail

/// Per-cell current contribution: I = ((v_dac - V_BIAS)/R_U) * (D/2^B_W),
/// scaled by (1 + mismatch) and steered by the sign flags. Idle cells draw
/// nothing.
inline CellCurrents mwc_current(double v_dac, const WeightCode& w,
                                const ArrayConfig& cfg,
                                double cell_mismatch = 0.0) {
  w.validate(cfg);
  CellCurrents out;
  if (w.idle_state()) return out;
  const double i = detail::cell_current(v_dac - cfg.v_bias, w.magnitude, cfg,
                                        cell_mismatch);
  if (w.to_positive)
    out.positive = i;
  else
    out.negative = i;
  return out;
}

struct LineCurrents {
  double positive = 0.0;
  double negative = 0.0;
  double net() const { return positive - negative; }
};

/// Per-cell effective currents for one column, with the first-order parasitic
/// model applied. Each cell's drive is attenuated by its input divider; the
/// summation-node regulation error at row i accumulates the drops of the wire
/// segments between the amplifier and that row, each segment carrying the
/// estimated net current of every cell beyond it. Two passes: the first forms
/// the per-line current estimates, the second applies the drops.
inline std::vector<CellCurrents> column_cell_currents(
    std::span<const InputCode> inputs, std::span<const WeightCode> weights,
    const ArrayConfig& cfg, const NonidealityProfile* profile = nullptr,
    int column = 0) {
  if (inputs.size() != weights.size() ||
      inputs.size() != static_cast<std::size_t>(cfg.rows))
    throw std::invalid_argument("column_cell_currents: vector lengths must equal rows");
  const int n = cfg.rows;
  std::vector<CellCurrents> cells(static_cast<std::size_t>(n));
  std::vector<double> dv_eff(static_cast<std::size_t>(n), 0.0);

  double f_in = 1.0;
  double r_y = 0.0;
  if (profile != nullptr) {
    f_in = cfg.r_unit /
           (cfg.r_unit + profile->r_driver + column * profile->r_wire_x);
    r_y = profile->r_wire_y;
  }

  std::vector<double> est_pos(static_cast<std::size_t>(n), 0.0);
  std::vector<double> est_neg(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const WeightCode& w = weights[static_cast<std::size_t>(i)];
    w.validate(cfg);
    if (w.idle_state()) continue;
    const double v_dac = input_dac_transfer(inputs[static_cast<std::size_t>(i)],
                                            cfg, profile, i);
    dv_eff[static_cast<std::size_t>(i)] = f_in * (v_dac - cfg.v_bias);
    const double mm = profile != nullptr ? profile->mismatch_at(i, column) : 0.0;
    const double i1 = detail::cell_current(dv_eff[static_cast<std::size_t>(i)],
                                           w.magnitude, cfg, mm);
    (w.to_positive ? est_pos : est_neg)[static_cast<std::size_t>(i)] = i1;
  }

  // drop(i) = r_y * sum_{k<=i} (current through segment k) with segment k
  // carrying the estimated current of all cells at rows >= k.
  std::vector<double> drop_pos(static_cast<std::size_t>(n), 0.0);
  std::vector<double> drop_neg(static_cast<std::size_t>(n), 0.0);
  if (r_y > 0.0) {
    double tail_pos = 0.0, tail_neg = 0.0;
    for (int i = n - 1; i >= 0; --i) {
      tail_pos += est_pos[static_cast<std::size_t>(i)];
      tail_neg += est_neg[static_cast<std::size_t>(i)];
      drop_pos[static_cast<std::size_t>(i)] = tail_pos;  // segment i carries the tail
      drop_neg[static_cast<std::size_t>(i)] = tail_neg;
    }
    double acc_pos = 0.0, acc_neg = 0.0;
    for (int i = 0; i < n; ++i) {
      drop_pos[static_cast<std::size_t>(i)] = acc_pos += i > 0 ? r_y * drop_pos[static_cast<std::size_t>(i)] : 0.0;
      drop_neg[static_cast<std::size_t>(i)] = acc_neg += i > 0 ? r_y * drop_neg[static_cast<std::size_t>(i)] : 0.0;
    }
  }

  for (int i = 0; i < n; ++i) {
    const WeightCode& w = weights[static_cast<std::size_t>(i)];
    if (w.idle_state()) continue;
    const double mm = profile != nullptr ? profile->mismatch_at(i, column) : 0.0;
    const double drop = w.to_positive ? drop_pos[static_cast<std::size_t>(i)]
                                      : drop_neg[static_cast<std::size_t>(i)];
    const double cur =
        detail::cell_current(dv_eff[static_cast<std::size_t>(i)] - drop, w.magnitude, cfg, mm);
    if (w.to_positive)
      cells[static_cast<std::size_t>(i)].positive = cur;
    else
      cells[static_cast<std::size_t>(i)].negative = cur;
  }
  return cells;
}

/// Column line currents: sum of the per-cell contributions.
inline LineCurrents column_currents(std::span<const InputCode> inputs,
                                    std::span<const WeightCode> weights,
                                    const ArrayConfig& cfg,
                                    const NonidealityProfile* profile = nullptr,
                                    int column = 0) {
  LineCurrents out;
  for (const CellCurrents& c :
       column_cell_currents(inputs, weights, cfg, profile, column)) {
    out.positive += c.positive;
    out.negative += c.negative;
  }
  return out;
}

struct SaOutput {
  double v_sa = 0.0;
  double v_x = 0.0;
};

/// Two-stage summing amplifier, one effective linear stage per line. Each
/// line applies its own gain error to its trimmed transresistance and carries
/// its own calibration voltage and offset; the stage-2 combiner references
/// the mid-rail:
///
///   V_SA = a_p*R_p*I_pos - a_n*R_n*I_neg
///        + (V_CAL_p + b_p) + (V_CAL_n + b_n) - V_BIAS  (+ noise + drift)
///
/// which reduces to Eq.-style  V_SA = a*R_SA*I_MAC + V_CAL + b  when both
/// lines share trims. V_X reports the first-stage (positive-line) output for
/// diagnostics; settling is treated as instantaneous.
inline SaOutput sa_output(double i_pos, double i_neg,
                          const CalibrationState& cal, int column,
                          const ArrayConfig& cfg,
                          const NonidealityProfile* profile = nullptr,
                          std::uint64_t cycle = 0) {
  const LineTrim& pos = cal.at(column, Line::positive);
  const LineTrim& neg = cal.at(column, Line::negative);
  double a_p = 1.0, a_n = 1.0, b_p = 0.0, b_n = 0.0, disturb = 0.0;
  if (profile != nullptr) {
    a_p = profile->alpha_a[static_cast<std::size_t>(column)][0];
    a_n = profile->alpha_a[static_cast<std::size_t>(column)][1];
    b_p = profile->beta_a[static_cast<std::size_t>(column)][0];
    b_n = profile->beta_a[static_cast<std::size_t>(column)][1];
    disturb = profile->noise_sample(column, cycle) +
              profile->drift_offset(column, cycle);
  }
  SaOutput out;
  out.v_x = pos.v_cal + b_p - a_p * pos.r_sa * i_pos;
  out.v_sa = a_p * pos.r_sa * i_pos - a_n * neg.r_sa * i_neg +
             (pos.v_cal + b_p) + (neg.v_cal + b_n) - cfg.v_bias + disturb;
  return out;
}

struct AdcResult {
  int code = 0;
  bool clipped = false;
  double real = 0.0;  // pre-rounding code
};

/// Flash ADC: code = round((v - ref_low) * C_ADC), ties away from zero, with
/// the profile's digital gain/offset applied before rounding. Saturates to
/// the code range and flags saturation.
inline AdcResult adc_quantize(double v, double ref_low, double ref_high,
                              const ArrayConfig& cfg,
                              const NonidealityProfile* profile = nullptr) {
  if (!(ref_low < ref_high))
    throw std::invalid_argument("adc_quantize: references must be ordered");
  const double ideal = (v - ref_low) * cfg.adc_gain(ref_low, ref_high);
  double real = ideal;
  if (profile != nullptr) {
    const double fs = static_cast<double>(cfg.adc_fullscale());
    real = profile->alpha_d * real + profile->beta_d +
           profile->adc_inl(std::clamp(ideal / fs, 0.0, 1.0));
  }
  AdcResult out;
  out.real = real;
  const int fs = cfg.adc_fullscale();
  out.clipped = real < 0.0 || real > static_cast<double>(fs);
  out.code = std::clamp(static_cast<int>(std::round(real)), 0, fs);
  return out;
}

/// Error-free net column current from the code vectors alone (Eq.-3 sum with
/// no profile applied).
inline double ideal_net_current(std::span<const InputCode> inputs,
                                std::span<const WeightCode> weights,
                                const ArrayConfig& cfg) {
  if (inputs.size() != weights.size() ||
      inputs.size() != static_cast<std::size_t>(cfg.rows))
    throw std::invalid_argument("ideal_net_current: vector lengths must equal rows");
  double net = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const WeightCode& w = weights[i];
    w.validate(cfg);
    if (w.idle_state()) continue;
    const double dv = input_dac_transfer(inputs[i], cfg) - cfg.v_bias;
    const double cur = detail::cell_current(dv, w.magnitude, cfg, 0.0);
    net += w.to_positive ? cur : -cur;
  }
  return net;
}

/// Nominal digital transfer: Q_nom = C_ADC * [R_SA*I_MAC + V_CAL - ref_low]
/// with R_SA = R_U/N and V_CAL = V_BIAS. Real valued; this is the oracle all
/// error and SNR computations compare against.
inline double mac_ideal(std::span<const InputCode> inputs,
                        std::span<const WeightCode> weights,
                        const ArrayConfig& cfg, double ref_low,
                        double ref_high) {
  const double i_mac = ideal_net_current(inputs, weights, cfg);
  return cfg.adc_gain(ref_low, ref_high) *
         (cfg.r_sa_nominal() * i_mac + cfg.v_bias - ref_low);
}

inline double mac_ideal(std::span<const InputCode> inputs,
                        std::span<const WeightCode> weights,
                        const ArrayConfig& cfg) {
  return mac_ideal(inputs, weights, cfg, cfg.v_adc_low, cfg.v_adc_high);
}

/// Dense weight storage, rows x cols, row-major.
struct WeightMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<WeightCode> w;

  WeightMatrix() = default;
  WeightMatrix(int r, int c)
      : rows(r), cols(c), w(static_cast<std::size_t>(r) * c) {}

  WeightCode& at(int i, int j) { return w[static_cast<std::size_t>(i) * cols + j]; }
  const WeightCode& at(int i, int j) const {
    return w[static_cast<std::size_t>(i) * cols + j];
  }

  std::vector<WeightCode> column(int j) const {
    std::vector<WeightCode> out(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) out[static_cast<std::size_t>(i)] = at(i, j);
    return out;
  }
};

inline ColumnSample evaluate_column(std::span<const InputCode> inputs,
                                    std::span<const WeightCode> col_weights,
                                    int column, const ArrayConfig& cfg,
                                    const NonidealityProfile* profile,
                                    const CalibrationState& cal,
                                    std::uint64_t cycle) {
  const LineCurrents i = column_currents(inputs, col_weights, cfg, profile, column);
  const SaOutput sa = sa_output(i.positive, i.negative, cal, column, cfg, profile, cycle);
  const AdcResult q = adc_quantize(sa.v_sa, cal.v_adc_low, cal.v_adc_high, cfg, profile);
  ColumnSample s;
  s.column = column;
  s.line = Line::combined;
  s.v_sa = sa.v_sa;
  s.v_x = sa.v_x;
  s.adc_code = q.code;
  s.clipped = q.clipped;
  s.code_real = q.real;
  return s;
}

/// One inference cycle over the whole array. Columns are independent; the
/// result does not depend on evaluation order.
inline std::vector<ColumnSample> forward(std::span<const InputCode> inputs,
                                         const WeightMatrix& weights,
                                         const ArrayConfig& cfg,
                                         const NonidealityProfile* profile,
                                         const CalibrationState& cal,
                                         std::uint64_t cycle = 0) {
  if (weights.rows != cfg.rows || weights.cols != cfg.cols)
    throw std::invalid_argument("forward: weight matrix shape mismatch");
  if (inputs.size() != static_cast<std::size_t>(cfg.rows))
    throw std::invalid_argument("forward: input length mismatch");
  std::vector<ColumnSample> out;
  out.reserve(static_cast<std::size_t>(cfg.cols));
  std::vector<WeightCode> col(static_cast<std::size_t>(cfg.rows));
  for (int j = 0; j < cfg.cols; ++j) {
    for (int i = 0; i < cfg.rows; ++i) col[static_cast<std::size_t>(i)] = weights.at(i, j);
    out.push_back(evaluate_column(inputs, col, j, cfg, profile, cal, cycle));
  }
  return out;
}

/// Bundles configuration, sampled profile, calibration state and the running
/// inference-cycle counter. The cycle feeds the counter-based noise and drift
/// draws, so identical (state, cycle) always reproduces identical readings.
struct Simulator {
  ArrayConfig cfg;
  NonidealityProfile profile;
  CalibrationState cal;
  std::uint64_t cycle = 0;

  Simulator(const ArrayConfig& c, const NonidealityProfile& p)
      : cfg(c), profile(p), cal(CalibrationState::nominal(c)) {
    cfg.validate();
  }

  // An ideal profile holds exact identity values, so passing it through is
  // bit-identical to the no-profile path.
  const NonidealityProfile* profile_ptr() const { return &profile; }

  std::vector<ColumnSample> step(std::span<const InputCode> inputs,
                                 const WeightMatrix& weights) {
    return forward(inputs, weights, cfg, profile_ptr(), cal, cycle++);
  }

  ColumnSample step_column(int column, std::span<const InputCode> inputs,
                           std::span<const WeightCode> col_weights) {
    return evaluate_column(inputs, col_weights, column, cfg, profile_ptr(), cal,
                           cycle++);
  }

  /// Read-only evaluation at an explicit cycle (parallel callers assign
  /// disjoint cycle indices themselves).
  ColumnSample eval_column_at(int column, std::span<const InputCode> inputs,
                              std::span<const WeightCode> col_weights,
                              std::uint64_t at_cycle) const {
    return evaluate_column(inputs, col_weights, column, cfg, profile_ptr(), cal,
                           at_cycle);
  }

  std::vector<ColumnSample> eval_at(std::span<const InputCode> inputs,
                                    const WeightMatrix& weights,
                                    std::uint64_t at_cycle) const {
    return forward(inputs, weights, cfg, profile_ptr(), cal, at_cycle);
  }
};

}  // namespace cimsim
