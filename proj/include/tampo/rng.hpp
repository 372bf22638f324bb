#pragma once

/**
 * @file rng.hpp
 * @brief Deterministic, splittable random streams.
 *
 * Every source of randomness in the library is an explicit Stream derived
 * from a single experiment seed. Substreams are derived by hashing the
 * parent seed together with a key path (e.g. {purpose, step, slot}), so
 * serial and parallel execution consume independent, reproducible streams.
 *
 * The generator is SplitMix64: tiny, portable, and bit-stable across
 * platforms (unlike std distributions, whose output is
 * implementation-defined).
 */

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace tampo::rng {

namespace detail {

// SplitMix64 state advance + output (Steele et al.).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t h) {
  std::uint64_t s = h;
  return splitmix64(s);
}

}  // namespace detail

/// Hash a seed with a key path into a new, statistically independent seed.
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = detail::mix(seed ^ 0xA0761D6478BD642Full);
  for (std::uint64_t w : path) {
    h = detail::mix(h ^ detail::mix(w ^ 0xE7037ED1A0B428DBull));
  }
  return h;
}

/**
 * A deterministic random stream.
 *
 * Copies advance independently; split() derives a child stream from the
 * construction seed (not the evolving state), so the same key always
 * yields the same child regardless of how much the parent has consumed.
 */
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Stream::below: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /**
   * Inverse-CDF sample from a categorical distribution.
   * probs must be nonnegative and sum to ~1; returns the last index with
   * positive mass if rounding leaves the CDF just short of the draw.
   */
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("Stream::categorical: empty distribution");
    const double u = uniform01();
    double acc = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = static_cast<int>(i);
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    if (last_positive < 0) throw std::invalid_argument("Stream::categorical: all-zero distribution");
    return last_positive;
  }

  /// Derive an independent child stream keyed off the construction seed.
  Stream split(std::uint64_t key) const { return Stream(derive(seed_, {key})); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by a Stream.
template <typename T>
void shuffle(std::vector<T>& items, Stream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace tampo::rng
