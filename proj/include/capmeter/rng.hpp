#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace capmeter::rng {

/// Named substreams. All randomness in the project flows from a single base
/// seed; each consumer derives its own stream so components stay reproducible
/// independently of each other.
enum class Stream : std::uint64_t {
  init_first_layer = 0x11,
  init_second_layer = 0x12,
  shuffle = 0x21,
  labels = 0x22,
  sampling = 0x23,
  class_means = 0x31,
  noise = 0x32,
  spectral_restart = 0x41,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Mixes a base seed with a stream tag (and an optional salt such as a
/// network width) into an independent-looking 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::uint64_t salt = 0) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64(s);
  s ^= static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL;
  std::uint64_t b = splitmix64(s);
  s ^= salt * 0x8CB92BA72F3D8DD7ULL;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

/// xoshiro256** generator. Self-contained so that sequences are identical
/// across standard libraries (std:: distributions are not portable).
class Engine {
 public:
  explicit Engine(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
    cached_gaussian_valid_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double gaussian() {
    if (cached_gaussian_valid_) {
      cached_gaussian_valid_ = false;
      return cached_gaussian_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_gaussian_ = r * std::sin(theta);
    cached_gaussian_valid_ = true;
    return r * std::cos(theta);
  }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  int sign() { return (next_u64() & 1u) ? 1 : -1; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double cached_gaussian_ = 0.0;
  bool cached_gaussian_valid_ = false;
};

}  // namespace capmeter::rng
