#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>

namespace cimsim {

/// Named draw streams. Every stochastic quantity in the simulator pulls from
/// its own stream so that adding or reordering consumers never perturbs the
/// values another consumer sees for the same seed.
enum class Stream : std::uint64_t {
  alpha_a = 1,
  beta_a,
  alpha_d,
  beta_d,
  parasitics,
  mismatch,
  dac_inl,
  noise,
  drift,
  stimulus,
  subset,
  shuffle,
  weight_init,
  datagen,
  scenario,
};

/// splitmix64 finalizer; full-period bijection on 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Counter-based generator: each draw is a pure hash of
/// (seed, stream, a, b, c, sub). There is no sequential state, so draws are
/// reproducible under any evaluation order and safe to compute in parallel.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(Stream s, std::uint64_t a = 0, std::uint64_t b = 0,
                     std::uint64_t c = 0, std::uint64_t sub = 0) const {
    std::uint64_t h = mix64(seed_ ^ 0x7c9a6c4f0d2e1b35ull);
    h = mix64(h ^ static_cast<std::uint64_t>(s));
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return mix64(h ^ sub);
  }

  /// Uniform in [0, 1).
  double uniform(Stream s, std::uint64_t a = 0, std::uint64_t b = 0,
                 std::uint64_t c = 0, std::uint64_t sub = 0) const {
    return static_cast<double>(bits(s, a, b, c, sub) >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1); endpoints excluded so log() is always finite.
  double uniform_open(Stream s, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0, std::uint64_t sub = 0) const {
    return (static_cast<double>(bits(s, a, b, c, sub) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two sub-draws of the same counter.
  double gaussian(Stream s, std::uint64_t a = 0, std::uint64_t b = 0,
                  std::uint64_t c = 0) const {
    const double u1 = uniform_open(s, a, b, c, 0);
    const double u2 = uniform(s, a, b, c, 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Sequential convenience wrapper over CounterRng for shuffles and batched
/// draws where a running counter is the natural keying.
class SequenceRng {
 public:
  SequenceRng(std::uint64_t seed, Stream s, std::uint64_t instance = 0)
      : rng_(seed), stream_(s), instance_(instance) {}

  double next_uniform() { return rng_.uniform(stream_, instance_, counter_++); }
  double next_gaussian() { return rng_.gaussian(stream_, instance_, counter_++); }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    return rng_.bits(stream_, instance_, counter_++) % n;
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = next_below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  CounterRng rng_;
  Stream stream_;
  std::uint64_t instance_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace cimsim
