#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cimsim {

/// Static geometry and electrical constants of the array. Defaults mirror the
/// fabricated 36x32 macro: 6+sign-bit inputs and weights, 6-bit ADC, 385 kOhm
/// unit resistance, 0.2/0.6 V input references with a 0.4 V mid-rail zero
/// level, 1 us sample-and-hold period at 1 MHz inference rate.
struct ArrayConfig {
  int rows = 36;
  int cols = 32;
  double r_unit = 385e3;     // ohms, R-2R unit resistance
  int input_bits = 6;        // magnitude bits, sign carried separately
  int weight_bits = 6;
  int adc_bits = 6;
  double v_in_low = 0.2;     // volts
  double v_in_high = 0.6;
  double v_bias = 0.4;       // analog zero level
  double t_sample = 1e-6;    // seconds, S&H period
  double f_inference = 1e6;  // hertz
  double v_adc_low = 0.2;    // default ADC references
  double v_adc_high = 0.6;

  // Positive input codes steer the DAC toward v_in_low (odd-symmetric about
  // v_bias). The opposite polarity is supported for experimentation since the
  // physical mapping is a board-level convention.
  bool dac_positive_toward_low = true;

  int input_fullscale() const { return (1 << input_bits) - 1; }
  int weight_fullscale() const { return (1 << weight_bits) - 1; }
  int adc_fullscale() const { return (1 << adc_bits) - 1; }

  /// Nominal transresistance R_U / N.
  double r_sa_nominal() const { return r_unit / rows; }

  /// ADC conversion factor (codes per volt) for a reference pair.
  double adc_gain(double ref_low, double ref_high) const {
    return adc_fullscale() / (ref_high - ref_low);
  }
  double adc_gain() const { return adc_gain(v_adc_low, v_adc_high); }

  void validate() const {
    if (rows < 1 || cols < 1) throw std::invalid_argument("array dims must be >= 1");
    if (input_bits < 1 || weight_bits < 1 || adc_bits < 1)
      throw std::invalid_argument("bit widths must be >= 1");
    if (r_unit <= 0) throw std::invalid_argument("r_unit must be positive");
    if (!(v_in_low < v_bias && v_bias < v_in_high))
      throw std::invalid_argument("require v_in_low < v_bias < v_in_high");
    if (std::abs(v_bias - 0.5 * (v_in_low + v_in_high)) > 1e-12)
      throw std::invalid_argument("v_bias must be the input-reference midpoint");
    if (!(v_adc_low < v_adc_high))
      throw std::invalid_argument("ADC references must be ordered");
    if (t_sample <= 0 || f_inference <= 0)
      throw std::invalid_argument("timing parameters must be positive");
  }
};

/// Signed input sample: 6-bit magnitude plus sign bit.
struct InputCode {
  int magnitude = 0;
  int sign = +1;  // +1 or -1

  static InputCode from_signed(int value) {
    return InputCode{std::abs(value), value < 0 ? -1 : +1};
  }
  int signed_value() const { return sign * magnitude; }

  void validate(const ArrayConfig& cfg) const {
    if (sign != +1 && sign != -1) throw std::invalid_argument("input sign must be +/-1");
    if (magnitude < 0 || magnitude > cfg.input_fullscale())
      throw std::invalid_argument("input magnitude out of range");
  }
};

/// Stored cell weight: 6-bit magnitude plus two steering flags. (0,0) is the
/// idle state regardless of magnitude; (1,1) is forbidden.
struct WeightCode {
  int magnitude = 0;
  bool to_positive = false;  // W6: route to positive summation line
  bool to_negative = false;  // W7: route to negative summation line

  static WeightCode idle() { return {}; }
  static WeightCode positive(int d) { return WeightCode{d, true, false}; }
  static WeightCode negative(int d) { return WeightCode{d, false, true}; }
  static WeightCode from_signed(int value) {
    if (value == 0) return idle();
    return value > 0 ? positive(value) : negative(-value);
  }

  bool idle_state() const { return !to_positive && !to_negative; }
  int signed_value() const {
    return idle_state() ? 0 : (to_positive ? magnitude : -magnitude);
  }

  void validate(const ArrayConfig& cfg) const {
    if (to_positive && to_negative)
      throw std::invalid_argument("weight sign flags must not both be set");
    if (magnitude < 0 || magnitude > cfg.weight_fullscale())
      throw std::invalid_argument("weight magnitude out of range");
  }
};

enum class Line : int { positive = 0, negative = 1, combined = 2 };

inline const char* line_name(Line l) {
  switch (l) {
    case Line::positive: return "positive";
    case Line::negative: return "negative";
    default: return "combined";
  }
}

/// One digitized column readout, with the pre-quantization voltage and the
/// unrounded code kept for diagnostics.
struct ColumnSample {
  int column = 0;
  Line line = Line::combined;
  double v_sa = 0.0;
  double v_x = 0.0;       // first-stage output, diagnostic only
  int adc_code = 0;
  bool clipped = false;
  double code_real = 0.0;  // pre-rounding code
};

/// Realized trim settings for one summation line of one column.
struct LineTrim {
  double r_sa = 0.0;   // ohms, realized transresistance
  double v_cal = 0.0;  // volts, realized calibration voltage
  int pot_code = -1;   // -1 while at the hardware default tap
  int dac_code = -1;
  bool calibrated = false;
  bool failed = false;
};

/// Chain response as the host knows it after calibration: the residual
/// analog gain and zero-level offset measured once the trims are written
/// (both identity when uncharacterized). Digital readout paths use these for
/// fine compensation below the trim grids; the raw code path ignores them.
struct ResidualResponse {
  double gain = 1.0;           // residual analog gain
  double v_zero_offset = 0.0;  // volts, chain zero deviation from V_CAL
};

/// Per-column, per-line trim state plus the active ADC references and the
/// system's knowledge of the converter (the ADC parameter store). Owned by
/// the caller; the array model only reads it.
struct CalibrationState {
  std::vector<std::array<LineTrim, 2>> trims;  // [column][line]
  std::vector<std::array<ResidualResponse, 2>> residual;
  double v_adc_low = 0.0;
  double v_adc_high = 0.0;
  double adc_alpha_d = 1.0;  // stored ADC parameters (identity until measured)
  double adc_beta_d = 0.0;

  static CalibrationState nominal(const ArrayConfig& cfg) {
    CalibrationState s;
    LineTrim t;
    t.r_sa = cfg.r_sa_nominal();
    t.v_cal = cfg.v_bias;
    s.trims.assign(static_cast<std::size_t>(cfg.cols), {t, t});
    s.residual.assign(static_cast<std::size_t>(cfg.cols), {});
    s.v_adc_low = cfg.v_adc_low;
    s.v_adc_high = cfg.v_adc_high;
    return s;
  }

  const LineTrim& at(int column, Line line) const {
    return trims.at(static_cast<std::size_t>(column))[static_cast<std::size_t>(line)];
  }
  LineTrim& at(int column, Line line) {
    return trims.at(static_cast<std::size_t>(column))[static_cast<std::size_t>(line)];
  }
};

}  // namespace cimsim
