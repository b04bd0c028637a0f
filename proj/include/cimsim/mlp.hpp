#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/bisc.hpp"
#include "cimsim/core.hpp"
#include "cimsim/mnist.hpp"
#include "cimsim/rng.hpp"

namespace cimsim {

/// Plain two-layer perceptron (inputs -> ReLU hidden -> logits), trained with
/// vanilla SGD on softmax cross-entropy. Kept deliberately simple; it exists
/// to produce the float reference the quantized pipeline is measured against.
struct FloatMlp {
  int inputs = 784;
  int hidden = 72;
  int outputs = 10;
  std::vector<double> w1;  // hidden x inputs
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // outputs x hidden
  std::vector<double> b2;  // outputs

  static FloatMlp init(int in, int hid, int out, std::uint64_t seed) {
    FloatMlp m;
    m.inputs = in;
    m.hidden = hid;
    m.outputs = out;
    m.w1.resize(static_cast<std::size_t>(hid) * in);
    m.b1.assign(static_cast<std::size_t>(hid), 0.0);
    m.w2.resize(static_cast<std::size_t>(out) * hid);
    m.b2.assign(static_cast<std::size_t>(out), 0.0);
    SequenceRng rng(seed, Stream::weight_init);
    const double s1 = std::sqrt(2.0 / in);
    for (double& w : m.w1) w = s1 * rng.next_gaussian();
    const double s2 = std::sqrt(2.0 / hid);
    for (double& w : m.w2) w = s2 * rng.next_gaussian();
    return m;
  }

  void hidden_activations(std::span<const double> x, std::vector<double>& h) const {
    h.assign(static_cast<std::size_t>(hidden), 0.0);
    for (int j = 0; j < hidden; ++j) {
      const double* row = w1.data() + static_cast<std::size_t>(j) * inputs;
      double acc = b1[static_cast<std::size_t>(j)];
      for (int i = 0; i < inputs; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
      h[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
    }
  }

  void logits(std::span<const double> x, std::vector<double>& h,
              std::vector<double>& z) const {
    hidden_activations(x, h);
    z.assign(static_cast<std::size_t>(outputs), 0.0);
    for (int k = 0; k < outputs; ++k) {
      const double* row = w2.data() + static_cast<std::size_t>(k) * hidden;
      double acc = b2[static_cast<std::size_t>(k)];
      for (int j = 0; j < hidden; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(k)] = acc;
    }
  }

  int predict(std::span<const double> x) const {
    std::vector<double> h, z;
    logits(x, h, z);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
};

inline void normalize_image(std::span<const std::uint8_t> img,
                            std::vector<double>& x) {
  x.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) x[i] = img[i] / 255.0;
}

struct TrainOptions {
  int epochs = 24;
  double lr = 0.08;
  double lr_decay = 0.92;
  int batch = 16;
  int hidden = 72;
  std::uint64_t seed = 1;
};

inline double model_accuracy(const FloatMlp& m, const Dataset& data,
                             std::span<const int> indices = {}) {
  std::vector<int> all;
  if (indices.empty()) {
    all.resize(static_cast<std::size_t>(data.count));
    std::iota(all.begin(), all.end(), 0);
    indices = all;
  }
  std::vector<double> x;
  int correct = 0;
  for (int idx : indices) {
    normalize_image(data.image(idx), x);
    if (m.predict(x) == data.labels[static_cast<std::size_t>(idx)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

/// Reference trainer: shuffled mini-batch SGD with a geometric learning-rate
/// decay, no momentum, no regularization.
inline FloatMlp train_reference(const Dataset& train, const TrainOptions& opt) {
  if (train.count == 0) throw std::invalid_argument("train_reference: empty dataset");
  FloatMlp m = FloatMlp::init(train.pixel_count(), opt.hidden, 10, opt.seed);
  std::vector<int> order(static_cast<std::size_t>(train.count));
  std::iota(order.begin(), order.end(), 0);
  SequenceRng shuffle_rng(opt.seed, Stream::shuffle);

  std::vector<double> x, h, z, p;
  std::vector<double> dh(static_cast<std::size_t>(m.hidden));
  double lr = opt.lr;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    for (int n = 0; n < train.count; ++n) {
      const int idx = order[static_cast<std::size_t>(n)];
      normalize_image(train.image(idx), x);
      m.logits(x, h, z);
      // softmax
      const double zmax = *std::max_element(z.begin(), z.end());
      p.assign(z.size(), 0.0);
      double sum = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - zmax);
        sum += p[k];
      }
      for (double& v : p) v /= sum;
      const int label = train.labels[static_cast<std::size_t>(idx)];
      p[static_cast<std::size_t>(label)] -= 1.0;  // dL/dz

      // backprop, immediate SGD update (batch size folded into lr choice)
      const double step = lr / opt.batch;
      std::fill(dh.begin(), dh.end(), 0.0);
      for (int k = 0; k < m.outputs; ++k) {
        const double g = p[static_cast<std::size_t>(k)];
        double* row = m.w2.data() + static_cast<std::size_t>(k) * m.hidden;
        for (int j = 0; j < m.hidden; ++j) {
          dh[static_cast<std::size_t>(j)] += g * row[j];
          row[j] -= step * g * h[static_cast<std::size_t>(j)];
        }
        m.b2[static_cast<std::size_t>(k)] -= step * g;
      }
      for (int j = 0; j < m.hidden; ++j) {
        if (h[static_cast<std::size_t>(j)] <= 0.0) continue;  // ReLU gate
        const double g = dh[static_cast<std::size_t>(j)];
        double* row = m.w1.data() + static_cast<std::size_t>(j) * m.inputs;
        for (int i = 0; i < m.inputs; ++i) row[i] -= step * g * x[static_cast<std::size_t>(i)];
        m.b1[static_cast<std::size_t>(j)] -= step * g;
      }
    }
    lr *= opt.lr_decay;
  }
  return m;
}

/// One quantized layer: signed 6-bit weight codes on the array, real scale
/// factors and biases on the host. Activations quantize to input codes with
/// the layer's activation scale.
struct QuantizedLayer {
  int in = 0;
  int out = 0;
  std::vector<WeightCode> codes;  // out x in
  double weight_scale = 0.0;      // w ~ signed_code * weight_scale
  double act_scale = 0.0;         // x ~ input_code * act_scale
  std::vector<double> bias;
  // ADC reference window programmed for this layer's tile reads. Partial sums
  // of a trained layer swing a small fraction of the array's full-scale
  // current, so the readout window is sized from the calibration data to keep
  // the converter's step commensurate with the signal.
  double adc_low = 0.0;
  double adc_high = 0.0;
};

struct QuantizedMlp {
  std::vector<QuantizedLayer> layers;
  int inputs() const { return layers.front().in; }
  int outputs() const { return layers.back().out; }
};

/// Weight-range handling for quantization. `max_abs` anchors the scale to the
/// largest weight, so every weight round-trips within half a step. The
/// longest weight-magnitude tail in a trained layer is sparse, though, which
/// leaves typical codes far below full scale and per-tile dot products small
/// against the ADC step; `mse_optimal` (the pipeline default) picks the
/// clipping range minimizing total quantization error, clamping the few
/// outliers to full scale in exchange for code-range utilization.
enum class WeightClip { max_abs, mse_optimal };

/// Symmetric per-layer quantization: codes = round(w/scale) clamped to full
/// scale, with the sign mapped to the steering flags and zeros becoming idle
/// cells. Activation scales are calibrated as the max-abs activation over a
/// seeded subset of the calibration data, then frozen.
inline QuantizedMlp quantize_mlp(const FloatMlp& m, const ArrayConfig& cfg,
                                 const Dataset& calib, int calib_count = 512,
                                 std::uint64_t subset_seed = 7,
                                 WeightClip clip = WeightClip::mse_optimal) {
  const int wfs = cfg.weight_fullscale();
  const int dfs = cfg.input_fullscale();
  QuantizedMlp q;
  q.layers.resize(2);

  const auto quantization_sse = [&](const std::vector<double>& w, double scale) {
    double sse = 0.0;
    for (double v : w) {
      const int code = std::clamp(static_cast<int>(std::lround(v / scale)), -wfs, wfs);
      const double r = v - code * scale;
      sse += r * r;
    }
    return sse;
  };
  const auto quantize_layer = [&](QuantizedLayer& layer, const std::vector<double>& w,
                                  const std::vector<double>& b, int in, int out) {
    layer.in = in;
    layer.out = out;
    double wmax = 0.0;
    for (double v : w) wmax = std::max(wmax, std::abs(v));
    if (wmax == 0.0) throw std::invalid_argument("quantize_mlp: all-zero layer");
    double best_clip = wmax;
    if (clip == WeightClip::mse_optimal) {
      double best_sse = quantization_sse(w, wmax / wfs);
      for (int k = 4; k < 16; ++k) {
        const double c = wmax * k / 16.0;
        const double sse = quantization_sse(w, c / wfs);
        if (sse < best_sse) {
          best_sse = sse;
          best_clip = c;
        }
      }
    }
    layer.weight_scale = best_clip / wfs;
    layer.codes.resize(w.size());
    for (std::size_t k = 0; k < w.size(); ++k)
      layer.codes[k] = WeightCode::from_signed(std::clamp(
          static_cast<int>(std::lround(w[k] / layer.weight_scale)), -wfs, wfs));
    layer.bias = b;
  };
  quantize_layer(q.layers[0], m.w1, m.b1, m.inputs, m.hidden);
  quantize_layer(q.layers[1], m.w2, m.b2, m.hidden, m.outputs);

  // Activation ranges over the calibration subset.
  const std::vector<int> idx =
      subset_indices(calib.count, std::min(calib_count, calib.count), subset_seed);
  double x_max = 0.0, h_max = 0.0;
  std::vector<double> x, h;
  for (int i : idx) {
    normalize_image(calib.image(i), x);
    for (double v : x) x_max = std::max(x_max, std::abs(v));
    m.hidden_activations(x, h);
    for (double v : h) h_max = std::max(h_max, std::abs(v));
  }
  if (x_max == 0.0 || h_max == 0.0)
    throw std::invalid_argument("quantize_mlp: degenerate activation calibration");
  q.layers[0].act_scale = x_max / dfs;
  q.layers[1].act_scale = h_max / dfs;

  // Per-layer ADC windows: tile partial sums of a trained layer swing a small
  // fraction of the array's full-scale current, so the readout references are
  // programmed to a window sized from the calibration data (99.9th percentile
  // of per-tile sums, exact host arithmetic, converted to volts at the
  // nominal transresistance). The rare reads beyond the window clamp at its
  // edge; the window never collapses below +/-25 mV and never exceeds the
  // input references.
  const double k_slope =
      (cfg.v_bias - cfg.v_in_low) /
      (cfg.r_unit * (1 << cfg.input_bits) * (1 << cfg.weight_bits));
  const double volts_per_dot = cfg.r_sa_nominal() * k_slope;
  for (std::size_t li = 0; li < q.layers.size(); ++li) {
    QuantizedLayer& layer = q.layers[li];
    std::vector<double> tile_sums;
    for (int i : idx) {
      normalize_image(calib.image(i), x);
      std::vector<double>* act = &x;
      if (li == 1) {
        m.hidden_activations(x, h);
        act = &h;
      }
      std::vector<long long> xq(static_cast<std::size_t>(layer.in));
      for (int r = 0; r < layer.in; ++r)
        xq[static_cast<std::size_t>(r)] = std::clamp<long long>(
            std::llround((*act)[static_cast<std::size_t>(r)] / layer.act_scale), -dfs, dfs);
      for (int n = 0; n < layer.out; ++n) {
        const WeightCode* row = layer.codes.data() + static_cast<std::size_t>(n) * layer.in;
        for (int r0 = 0; r0 < layer.in; r0 += cfg.rows) {
          const int r1 = std::min(layer.in, r0 + cfg.rows);
          long long dot = 0;
          for (int r = r0; r < r1; ++r)
            dot += xq[static_cast<std::size_t>(r)] * row[r].signed_value();
          tile_sums.push_back(std::abs(static_cast<double>(dot)));
        }
      }
    }
    const std::size_t rank =
        std::min(tile_sums.size() - 1,
                 static_cast<std::size_t>(0.995 * static_cast<double>(tile_sums.size())));
    std::nth_element(tile_sums.begin(), tile_sums.begin() + static_cast<std::ptrdiff_t>(rank),
                     tile_sums.end());
    const double dot_span = tile_sums[rank];
    const double half_span = std::clamp(1.08 * dot_span * volts_per_dot, 0.018,
                                        cfg.v_bias - cfg.v_in_low);
    layer.adc_low = cfg.v_bias - half_span;
    layer.adc_high = cfg.v_bias + half_span;
  }
  return q;
}

/// One array-sized block of a layer: rows [row0, row0+nrows) of the input
/// dimension against neurons [col0, col0+ncols), padded with idle cells.
/// Successive row tiles rotate the neuron-to-column assignment by one
/// physical column, so a neuron's partial sums spread over the array instead
/// of stacking one column's analog errors coherently across the whole
/// accumulation depth.
struct Tile {
  int row0 = 0;
  int nrows = 0;
  int col0 = 0;
  int ncols = 0;
  int rotation = 0;  // physical column of logical j is (j + rotation) % cols
  WeightMatrix block;

  int physical_column(int j_logical, int total_cols) const {
    return (j_logical + rotation) % total_cols;
  }
};

inline std::vector<Tile> tile_layer(const QuantizedLayer& layer,
                                    const ArrayConfig& cfg) {
  if (layer.in < 1 || layer.out < 1)
    throw std::invalid_argument("tile_layer: empty layer");
  const int row_tiles = (layer.in + cfg.rows - 1) / cfg.rows;
  const int col_tiles = (layer.out + cfg.cols - 1) / cfg.cols;
  std::vector<Tile> tiles;
  tiles.reserve(static_cast<std::size_t>(row_tiles) * col_tiles);
  for (int ct = 0; ct < col_tiles; ++ct) {
    for (int rt = 0; rt < row_tiles; ++rt) {
      Tile t;
      t.row0 = rt * cfg.rows;
      t.nrows = std::min(cfg.rows, layer.in - t.row0);
      t.col0 = ct * cfg.cols;
      t.ncols = std::min(cfg.cols, layer.out - t.col0);
      t.rotation = rt % cfg.cols;
      t.block = WeightMatrix(cfg.rows, cfg.cols);
      for (int i = 0; i < t.nrows; ++i)
        for (int j = 0; j < t.ncols; ++j)
          t.block.at(i, t.physical_column(j, cfg.cols)) =
              layer.codes[static_cast<std::size_t>(t.col0 + j) * layer.in + t.row0 + i];
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

struct TileSchedule {
  std::vector<std::vector<Tile>> per_layer;
};

inline TileSchedule build_schedule(const QuantizedMlp& mlp, const ArrayConfig& cfg) {
  TileSchedule s;
  for (const QuantizedLayer& l : mlp.layers) s.per_layer.push_back(tile_layer(l, cfg));
  return s;
}

enum class InferMode {
  quantized,       // integer ADC codes, as the hardware reads them
  high_precision,  // pre-rounding ADC values (quantization bypassed)
};

/// Per-column readout linearization for one programmed ADC window: measured
/// code -> nominal code as a monotone piecewise-linear curve. An affine fit
/// is not enough here because the converter's nonlinearity leaves a
/// code-dependent residual, and inference readings cluster around mid-code
/// where that residual would bias every accumulation the same way.
struct WindowCal {
  int points = 0;
  std::vector<double> measured;  // [col * points + k], ascending per column
  std::vector<double> nominal;   // [points], shared grid

  /// Inverse lookup with linear interpolation; end segments extrapolate.
  double to_nominal(int col, double code) const {
    const double* xs = measured.data() + static_cast<std::size_t>(col) * points;
    int hi = 1;
    while (hi < points - 1 && code > xs[hi]) ++hi;
    const int lo = hi - 1;
    const double dx = xs[hi] - xs[lo];
    const double t = dx != 0.0 ? (code - xs[lo]) / dx : 0.0;
    return nominal[static_cast<std::size_t>(lo)] +
           t * (nominal[static_cast<std::size_t>(hi)] - nominal[static_cast<std::size_t>(lo)]);
  }
};

/// Measures the per-column response curve inside a reference window using
/// small stepped test vectors sized to stay within it: a few full-scale
/// weight rows driven by a common swept input. Readings average `repeats`
/// conversions per point, then a light smoothing pass; any non-monotone node
/// pair left by noise is nudged apart so the curve stays invertible.
inline WindowCal characterize_window(const Simulator& sim, double ref_low,
                                     double ref_high, std::uint64_t cycle_base,
                                     int points = 41, int repeats = 16) {
  const ArrayConfig& cfg = sim.cfg;
  CalibrationState cal = sim.cal;
  cal.v_adc_low = ref_low;
  cal.v_adc_high = ref_high;
  const double k_slope =
      (cfg.v_bias - cfg.v_in_low) /
      (cfg.r_unit * (1 << cfg.input_bits) * (1 << cfg.weight_bits));
  const double half_span_dots =
      0.5 * (ref_high - ref_low) / (cfg.r_sa_nominal() * k_slope);
  const int wfs = cfg.weight_fullscale();
  const int dfs = cfg.input_fullscale();
  const double per_row = static_cast<double>(wfs) * dfs;
  const int active_rows = std::clamp(
      static_cast<int>(0.8 * half_span_dots / per_row), 1, cfg.rows);

  std::vector<WeightCode> weights(static_cast<std::size_t>(cfg.rows), WeightCode::idle());
  for (int i = 0; i < active_rows; ++i)
    weights[static_cast<std::size_t>(i)] = WeightCode::positive(wfs);

  WindowCal out;
  out.points = points;
  out.nominal.assign(static_cast<std::size_t>(points), 0.0);
  out.measured.assign(static_cast<std::size_t>(cfg.cols) * points, 0.0);
  std::vector<InputCode> inputs(static_cast<std::size_t>(cfg.rows), InputCode{});

  std::uint64_t cycle = cycle_base;
  for (int k = 0; k < points; ++k) {
    const int signed_code = static_cast<int>(
        std::lround(-dfs + 2.0 * dfs * k / (points - 1)));
    const InputCode code = InputCode::from_signed(signed_code);
    for (int i = 0; i < active_rows; ++i) inputs[static_cast<std::size_t>(i)] = code;
    out.nominal[static_cast<std::size_t>(k)] =
        mac_ideal(inputs, weights, cfg, ref_low, ref_high);
    for (int r = 0; r < repeats; ++r) {
      for (int col = 0; col < cfg.cols; ++col) {
        const ColumnSample s =
            evaluate_column(inputs, weights, col, cfg, sim.profile_ptr(), cal, cycle);
        out.measured[static_cast<std::size_t>(col) * points + k] +=
            static_cast<double>(s.adc_code) / repeats;
      }
      ++cycle;
    }
  }
  // Normalize to ascending nominal order (the sweep runs high-to-low code)
  // and enforce strictly increasing measured nodes per column.
  if (out.nominal.front() > out.nominal.back()) {
    std::reverse(out.nominal.begin(), out.nominal.end());
    for (int col = 0; col < cfg.cols; ++col) {
      double* xs = out.measured.data() + static_cast<std::size_t>(col) * points;
      std::reverse(xs, xs + points);
    }
  }
  for (int col = 0; col < cfg.cols; ++col) {
    double* xs = out.measured.data() + static_cast<std::size_t>(col) * points;
    // 1-2-1 smoothing: averaged conversions still carry sub-LSB rounding
    // systematics; the underlying transfer is smooth, neighbor rounding
    // residues are not.
    std::vector<double> sm(xs, xs + points);
    for (int k = 1; k + 1 < points; ++k)
      sm[static_cast<std::size_t>(k)] = 0.25 * xs[k - 1] + 0.5 * xs[k] + 0.25 * xs[k + 1];
    std::copy(sm.begin(), sm.end(), xs);
    for (int k = 1; k < points; ++k)
      if (xs[k] <= xs[k - 1]) xs[k] = xs[k - 1] + 1e-6;
  }
  return out;
}

/// Readout linearization tables for a deployed model: one per layer window,
/// plus the full-range window used for auto-ranged re-reads of saturated
/// conversions.
struct ReadoutCal {
  std::vector<WindowCal> per_layer;
  WindowCal full_range;
  bool enabled = false;
};

/// Runs one sample through the array: per layer, activations quantize to
/// input codes, the layer's ADC reference window is programmed, every tile
/// executes one inference cycle, and codes de-map to real partial sums
/// through the inverse of the chain response the host knows (the per-column
/// window characterization when one was performed, the nominal transfer
/// otherwise). Partial sums accumulate per (neuron, column) slot, so tile
/// order cannot perturb the result; bias and ReLU apply on the host. The
/// final layer's argmax is taken on the de-mapped real values.
inline int infer(std::span<const std::uint8_t> image, const QuantizedMlp& mlp,
                 const TileSchedule& schedule, const Simulator& sim,
                 InferMode mode, std::uint64_t cycle_base,
                 const ReadoutCal* readout = nullptr, int read_repeats = 2) {
  const ArrayConfig& cfg = sim.cfg;
  const double k_slope =
      (cfg.v_bias - cfg.v_in_low) /
      (cfg.r_unit * (1 << cfg.input_bits) * (1 << cfg.weight_bits));
  std::vector<double> activ(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) activ[i] = image[i] / 255.0;

  std::uint64_t cycle = cycle_base;
  std::vector<InputCode> codes_in;
  CalibrationState layer_cal = sim.cal;
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const QuantizedLayer& layer = mlp.layers[li];
    if (activ.size() != static_cast<std::size_t>(layer.in))
      throw std::invalid_argument("infer: activation size mismatch");
    codes_in.resize(activ.size());
    const int dfs = cfg.input_fullscale();
    for (std::size_t i = 0; i < activ.size(); ++i) {
      const int d = static_cast<int>(std::lround(activ[i] / layer.act_scale));
      codes_in[i] = InputCode::from_signed(std::clamp(d, -dfs, dfs));
    }

    if (layer.adc_low < layer.adc_high) {
      layer_cal.v_adc_low = layer.adc_low;
      layer_cal.v_adc_high = layer.adc_high;
    }
    const double c_adc = cfg.adc_gain(layer_cal.v_adc_low, layer_cal.v_adc_high);

    // Voltage-deviation sums per (neuron, physical column): column rotation
    // spreads a neuron's reads over the array, and the per-slot accumulation
    // makes the result independent of tile execution order. Conversions that
    // saturate the layer window are re-read at the full-range references
    // (auto-ranging), so heavy partial sums lose resolution, not signal.
    const WindowCal* wc =
        readout != nullptr && li < readout->per_layer.size()
            ? &readout->per_layer[li]
            : nullptr;
    const int adc_fs = cfg.adc_fullscale();
    const std::size_t ncols = static_cast<std::size_t>(cfg.cols);
    std::vector<double> v_dev_sum(static_cast<std::size_t>(layer.out) * ncols, 0.0);
    std::vector<InputCode> tile_in(static_cast<std::size_t>(cfg.rows));
    const double c_adc_full = cfg.adc_gain(sim.cal.v_adc_low, sim.cal.v_adc_high);
    for (const Tile& t : schedule.per_layer[li]) {
      bool any_input = false;
      for (int i = 0; i < cfg.rows; ++i) {
        tile_in[static_cast<std::size_t>(i)] =
            i < t.nrows ? codes_in[static_cast<std::size_t>(t.row0 + i)] : InputCode{};
        any_input = any_input || tile_in[static_cast<std::size_t>(i)].magnitude != 0;
      }
      // All-zero input slices carry no MAC work; the host never issues them.
      if (!any_input) continue;
      // The converter runs much faster than the S&H hold, so each held tile
      // is converted `read_repeats` times and the codes averaged (noise
      // dithers the quantizer between conversions).
      const int rr = std::max(1, read_repeats);
      std::vector<double> mean_code(ncols, 0.0);
      bool any_edge = false;
      for (int r = 0; r < rr; ++r) {
        const std::vector<ColumnSample> samples =
            forward(tile_in, t.block, cfg, sim.profile_ptr(), layer_cal, cycle++);
        for (int j = 0; j < t.ncols; ++j) {
          const int phys = t.physical_column(j, cfg.cols);
          const ColumnSample& s = samples[static_cast<std::size_t>(phys)];
          mean_code[static_cast<std::size_t>(phys)] +=
              (mode == InferMode::quantized ? static_cast<double>(s.adc_code)
                                            : s.code_real) /
              rr;
          any_edge = any_edge || s.adc_code <= 0 || s.adc_code >= adc_fs || s.clipped;
        }
      }
      std::vector<double> mean_code_full(ncols, 0.0);
      if (any_edge) {
        for (int r = 0; r < rr; ++r) {
          const std::vector<ColumnSample> samples =
              forward(tile_in, t.block, cfg, sim.profile_ptr(), sim.cal, cycle++);
          for (int j = 0; j < t.ncols; ++j) {
            const int phys = t.physical_column(j, cfg.cols);
            const ColumnSample& s = samples[static_cast<std::size_t>(phys)];
            mean_code_full[static_cast<std::size_t>(phys)] +=
                (mode == InferMode::quantized ? static_cast<double>(s.adc_code)
                                              : s.code_real) /
                rr;
          }
        }
      }
      for (int j = 0; j < t.ncols; ++j) {
        const int phys = t.physical_column(j, cfg.cols);
        const double code = mean_code[static_cast<std::size_t>(phys)];
        const bool edge = code <= 0.25 || code >= adc_fs - 0.25;
        const std::size_t slot =
            static_cast<std::size_t>(t.col0 + j) * ncols + static_cast<std::size_t>(phys);
        double v_dev;
        if (edge && any_edge) {
          const double full = mean_code_full[static_cast<std::size_t>(phys)];
          const double q_nom =
              readout != nullptr ? readout->full_range.to_nominal(phys, full) : full;
          v_dev = q_nom / c_adc_full + (sim.cal.v_adc_low - cfg.v_bias);
        } else {
          const double q_nom = wc != nullptr ? wc->to_nominal(phys, code) : code;
          v_dev = q_nom / c_adc + (layer_cal.v_adc_low - cfg.v_bias);
        }
        v_dev_sum[slot] += v_dev;
      }
    }

    const double unit = layer.act_scale * layer.weight_scale;
    std::vector<double> next(static_cast<std::size_t>(layer.out));
    for (int n = 0; n < layer.out; ++n) {
      double dot = 0.0;
      for (int col = 0; col < cfg.cols; ++col) {
        const std::size_t slot =
            static_cast<std::size_t>(n) * ncols + static_cast<std::size_t>(col);
        // voltage deviation -> dot units through the nominal transresistance.
        dot += -v_dev_sum[slot] / (cfg.r_sa_nominal() * k_slope);
      }
      double y = dot * unit + layer.bias[static_cast<std::size_t>(n)];
      if (li + 1 < mlp.layers.size()) y = y > 0.0 ? y : 0.0;  // ReLU on hidden
      next[static_cast<std::size_t>(n)] = y;
    }
    activ = std::move(next);
  }
  return static_cast<int>(std::max_element(activ.begin(), activ.end()) - activ.begin());
}

/// Host-only integer oracle for the quantized network (no array, no ADC):
/// exact code-domain dot products in 64-bit, same scales and biases. Range:
/// |dot| <= in * 63 * 63 (about 3.1e6 for 784 inputs), far inside 64 bits.
inline int quantized_host_predict(std::span<const std::uint8_t> image,
                                  const QuantizedMlp& mlp, const ArrayConfig& cfg) {
  std::vector<double> activ(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) activ[i] = image[i] / 255.0;
  const int dfs = cfg.input_fullscale();
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const QuantizedLayer& layer = mlp.layers[li];
    std::vector<long long> xq(activ.size());
    for (std::size_t i = 0; i < activ.size(); ++i)
      xq[i] = std::clamp<long long>(std::llround(activ[i] / layer.act_scale), -dfs, dfs);
    const double unit = layer.act_scale * layer.weight_scale;
    std::vector<double> next(static_cast<std::size_t>(layer.out));
    for (int n = 0; n < layer.out; ++n) {
      long long dot = 0;
      const WeightCode* row = layer.codes.data() + static_cast<std::size_t>(n) * layer.in;
      for (int i = 0; i < layer.in; ++i)
        dot += xq[static_cast<std::size_t>(i)] * row[i].signed_value();
      double y = static_cast<double>(dot) * unit + layer.bias[static_cast<std::size_t>(n)];
      if (li + 1 < mlp.layers.size()) y = y > 0.0 ? y : 0.0;
      next[static_cast<std::size_t>(n)] = y;
    }
    activ = std::move(next);
  }
  return static_cast<int>(std::max_element(activ.begin(), activ.end()) - activ.begin());
}

struct EvalOutcome {
  int correct = 0;
  int total = 0;
  double accuracy = 0.0;
};

/// Characterizes every layer window of a model plus the full-range window.
/// Run once before an evaluation on a calibrated system (the uncalibrated
/// system has no characterization infrastructure to lean on and de-maps
/// nominally).
inline ReadoutCal characterize_model_windows(const Simulator& sim,
                                             const QuantizedMlp& mlp,
                                             std::uint64_t cycle_base) {
  ReadoutCal out;
  out.enabled = true;
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const QuantizedLayer& l = mlp.layers[li];
    const double lo = l.adc_low < l.adc_high ? l.adc_low : sim.cal.v_adc_low;
    const double hi = l.adc_low < l.adc_high ? l.adc_high : sim.cal.v_adc_high;
    out.per_layer.push_back(
        characterize_window(sim, lo, hi, cycle_base + (li + 1) * 4096));
  }
  out.full_range = characterize_window(
      sim, sim.cal.v_adc_low, sim.cal.v_adc_high,
      cycle_base + (mlp.layers.size() + 1) * 4096);
  return out;
}

/// Accuracy over a dataset subset. Samples are independent; `threads` only
/// partitions the work, never the results (each sample owns a disjoint cycle
/// window derived from its index). On a calibrated system the layer windows
/// are characterized once up front and shared by every sample.
inline EvalOutcome evaluate(const Dataset& data, std::span<const int> indices,
                            const QuantizedMlp& mlp, const TileSchedule& schedule,
                            const Simulator& sim, InferMode mode, int threads = 1,
                            std::uint64_t cycle_base = 1u << 20) {
  EvalOutcome out;
  out.total = static_cast<int>(indices.size());
  if (indices.empty()) return out;
  ReadoutCal readout;
  if (!sim.cal.trims.empty() && sim.cal.at(0, Line::positive).calibrated)
    readout = characterize_model_windows(sim, mlp, cycle_base);
  // The layer windows are part of the deployed model configuration; their
  // sizing budgets for the device family's offset spread, so the
  // uncharacterized system still reads inside them (with nominal de-mapping).
  const int nthreads = std::max(1, threads);
  std::vector<int> correct(static_cast<std::size_t>(nthreads), 0);
  const auto worker = [&](int tid) {
    int c = 0;
    for (std::size_t k = static_cast<std::size_t>(tid); k < indices.size();
         k += static_cast<std::size_t>(nthreads)) {
      const int idx = indices[k];
      const int label = infer(data.image(idx), mlp, schedule, sim, mode,
                              cycle_base + (k + 16) * 4096,
                              readout.enabled ? &readout : nullptr);
      if (label == data.labels[static_cast<std::size_t>(idx)]) ++c;
    }
    correct[static_cast<std::size_t>(tid)] = c;
  };
  if (nthreads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
    for (std::thread& t : pool) t.join();
  }
  for (int c : correct) out.correct += c;
  out.accuracy = static_cast<double>(out.correct) / out.total;
  return out;
}

}  // namespace cimsim
