#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). Every draw is a pure function of
// (key, counter), so streams indexed by (seed, replicate, purpose, index)
// are reproducible regardless of generation order or thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace camt {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter ctr) const {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }

  std::array<std::uint32_t, 2> key_;
};

// Named purposes so that distinct quantities never share a counter.
enum class Stream : std::uint32_t {
  kCovariate = 1,
  kTruth = 2,
  kNoise = 3,
  kBlockFactor = 4,
  kGamma = 5,
  kBootstrap = 6,
  kSampling = 7,
};

// A keyed family of uniform/normal draws addressed by (replicate, stream, index).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : philox_(seed) {}

  // Two independent 64-bit words for the given address.
  std::array<std::uint64_t, 2> bits(std::uint64_t replicate, Stream stream,
                                    std::uint64_t index) const {
    const auto out = philox_({static_cast<std::uint32_t>(index),
                              static_cast<std::uint32_t>(index >> 32),
                              static_cast<std::uint32_t>(replicate),
                              (static_cast<std::uint32_t>(stream) << 24) ^
                                  static_cast<std::uint32_t>(replicate >> 32)});
    return {(std::uint64_t{out[0]} << 32) | out[1], (std::uint64_t{out[2]} << 32) | out[3]};
  }

  // Uniform on the open interval (0, 1).
  static double to_open_unit(std::uint64_t word) {
    return (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(std::uint64_t replicate, Stream stream, std::uint64_t index) const {
    return to_open_unit(bits(replicate, stream, index)[0]);
  }

  // Standard normal via Box-Muller (cosine branch only).
  double normal(std::uint64_t replicate, Stream stream, std::uint64_t index) const {
    const auto w = bits(replicate, stream, index);
    const double u1 = to_open_unit(w[0]);
    const double u2 = to_open_unit(w[1]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Gamma(shape 2, scale 1) as the sum of two unit exponentials.
  double gamma_shape2(std::uint64_t replicate, Stream stream, std::uint64_t index) const {
    const auto w = bits(replicate, stream, index);
    return -std::log(to_open_unit(w[0])) - std::log(to_open_unit(w[1]));
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n, std::uint64_t replicate, Stream stream,
                      std::uint64_t index) const {
    const auto w = bits(replicate, stream, index)[0];
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(w) * n) >> 64);
  }

 private:
  Philox4x32 philox_;
};

// Combines two 64-bit values into a derived seed (SplitMix64 finaliser).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace camt
