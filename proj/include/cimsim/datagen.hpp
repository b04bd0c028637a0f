#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cimsim/mnist.hpp"
#include "cimsim/rng.hpp"

namespace cimsim {

/// Difficulty knobs for the procedural digit set. Defaults are tuned so a
/// 784-72-10 MLP trained with plain SGD lands in the mid-90s on the held-out
/// split, comparable to handwritten-digit benchmarks.
struct SynthParams {
  double rotation = 0.24;      // radians, +/-
  double shear = 0.22;         // +/-
  double scale_lo = 0.72;
  double scale_hi = 1.12;
  double translate = 2.4;      // pixels, +/-
  double jitter = 0.045;       // glyph-space control point noise
  double thickness_lo = 1.0;   // pixels
  double thickness_hi = 1.9;
  double noise_lo = 10.0;      // gray levels
  double noise_hi = 26.0;
  double intensity_lo = 0.62;
  double intensity_hi = 1.0;
};

namespace detail {

using Point = std::array<double, 2>;
using Stroke = std::vector<Point>;

inline Stroke circle_stroke(double cx, double cy, double rx, double ry,
                            double a0 = 0.0, double a1 = 2.0 * std::numbers::pi,
                            int segments = 20) {
  Stroke s;
  for (int k = 0; k <= segments; ++k) {
    const double a = a0 + (a1 - a0) * k / segments;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

/// Stroke skeletons in a unit box, y down. Deliberately plain shapes; the
/// affine/jitter/noise pipeline supplies the intra-class variation.
inline std::vector<Stroke> digit_strokes(int digit) {
  switch (digit) {
    case 0:
      return {circle_stroke(0.5, 0.5, 0.26, 0.38)};
    case 1:
      return {{{0.36, 0.26}, {0.54, 0.12}}, {{0.54, 0.12}, {0.54, 0.88}}};
    case 2:
      return {{{0.3, 0.3},
               {0.34, 0.16},
               {0.5, 0.11},
               {0.66, 0.17},
               {0.7, 0.32},
               {0.6, 0.5},
               {0.42, 0.66},
               {0.3, 0.85}},
              {{0.3, 0.85}, {0.73, 0.85}}};
    case 3:
      return {{{0.32, 0.17}, {0.5, 0.11}, {0.66, 0.2}, {0.66, 0.33}, {0.5, 0.45}},
              {{0.5, 0.45}, {0.68, 0.55}, {0.7, 0.72}, {0.54, 0.87}, {0.32, 0.82}}};
    case 4:
      return {{{0.6, 0.1}, {0.29, 0.6}},
              {{0.29, 0.6}, {0.77, 0.6}},
              {{0.61, 0.33}, {0.61, 0.9}}};
    case 5:
      return {{{0.68, 0.13}, {0.33, 0.13}},
              {{0.33, 0.13}, {0.31, 0.45}},
              {{0.31, 0.45}, {0.54, 0.41}, {0.69, 0.54}, {0.67, 0.72}, {0.5, 0.86}, {0.31, 0.8}}};
    case 6:
      return {{{0.62, 0.11}, {0.44, 0.28}, {0.34, 0.5}, {0.33, 0.66}},
              circle_stroke(0.5, 0.67, 0.18, 0.19)};
    case 7:
      return {{{0.28, 0.14}, {0.72, 0.14}}, {{0.72, 0.14}, {0.44, 0.88}}};
    case 8:
      return {circle_stroke(0.5, 0.3, 0.17, 0.17), circle_stroke(0.5, 0.69, 0.21, 0.2)};
    case 9:
      return {circle_stroke(0.5, 0.32, 0.19, 0.2),
              {{0.69, 0.34}, {0.66, 0.6}, {0.54, 0.88}}};
    default:
      return {};
  }
}

}  // namespace detail

/// One rendered digit: jittered stroke skeleton, random affine placement,
/// Gaussian-splat stroke rendering, then intensity scaling and pixel noise.
/// Fully determined by (seed, index).
inline void render_digit(std::uint8_t* out28x28, int digit, std::uint64_t seed,
                         std::uint64_t index, const SynthParams& p = {}) {
  SequenceRng rng(seed, Stream::datagen, index);
  const double rot = p.rotation * (2.0 * rng.next_uniform() - 1.0);
  const double shear = p.shear * (2.0 * rng.next_uniform() - 1.0);
  const double sx = p.scale_lo + (p.scale_hi - p.scale_lo) * rng.next_uniform();
  const double sy = p.scale_lo + (p.scale_hi - p.scale_lo) * rng.next_uniform();
  const double tx = p.translate * (2.0 * rng.next_uniform() - 1.0);
  const double ty = p.translate * (2.0 * rng.next_uniform() - 1.0);
  const double thick =
      p.thickness_lo + (p.thickness_hi - p.thickness_lo) * rng.next_uniform();
  const double intensity =
      p.intensity_lo + (p.intensity_hi - p.intensity_lo) * rng.next_uniform();
  const double noise =
      p.noise_lo + (p.noise_hi - p.noise_lo) * rng.next_uniform();

  const double box = 21.0;
  const double ca = std::cos(rot), sa = std::sin(rot);
  const auto map = [&](detail::Point g) {
    const double gx = g[0] - 0.5;
    const double gy = g[1] - 0.5;
    double x = sx * (gx + shear * gy);
    double y = sy * gy;
    const double xr = ca * x - sa * y;
    const double yr = sa * x + ca * y;
    return detail::Point{14.0 + box * xr + tx, 14.0 + box * yr + ty};
  };

  std::array<double, 28 * 28> canvas{};
  const double sigma = 0.55 * thick;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (detail::Stroke stroke : detail::digit_strokes(digit)) {
    for (detail::Point& pt : stroke) {
      pt[0] += p.jitter * rng.next_gaussian();
      pt[1] += p.jitter * rng.next_gaussian();
    }
    for (std::size_t s = 0; s + 1 < stroke.size(); ++s) {
      const detail::Point a = map(stroke[s]);
      const detail::Point b = map(stroke[s + 1]);
      const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
      const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.4)));
      for (int k = 0; k <= steps; ++k) {
        const double px = a[0] + (b[0] - a[0]) * k / steps;
        const double py = a[1] + (b[1] - a[1]) * k / steps;
        const int x0 = std::max(0, static_cast<int>(px - 3 * sigma));
        const int x1 = std::min(27, static_cast<int>(px + 3 * sigma) + 1);
        const int y0 = std::max(0, static_cast<int>(py - 3 * sigma));
        const int y1 = std::min(27, static_cast<int>(py + 3 * sigma) + 1);
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
            double& c = canvas[static_cast<std::size_t>(y) * 28 + x];
            c = std::max(c, std::exp(-d2 * inv2s2));
          }
        }
      }
    }
  }

  for (int k = 0; k < 28 * 28; ++k) {
    double v = 255.0 * intensity * canvas[static_cast<std::size_t>(k)];
    v += noise * rng.next_gaussian();
    out28x28[k] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
}

/// Balanced, seeded 28x28 digit set in the standard layout.
inline Dataset make_synthetic_digits(int count, std::uint64_t seed,
                                     const SynthParams& p = {}) {
  Dataset d;
  d.count = count;
  d.rows = 28;
  d.cols = 28;
  d.pixels.resize(static_cast<std::size_t>(count) * 28 * 28);
  d.labels.resize(static_cast<std::size_t>(count));
  const CounterRng label_rng(seed);
  for (int i = 0; i < count; ++i) {
    const int digit = static_cast<int>(
        label_rng.bits(Stream::datagen, 0xD161Du, static_cast<std::uint64_t>(i)) % 10);
    d.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(digit);
    render_digit(d.pixels.data() + static_cast<std::size_t>(i) * 28 * 28, digit,
                 seed, static_cast<std::uint64_t>(i), p);
  }
  return d;
}

}  // namespace cimsim
