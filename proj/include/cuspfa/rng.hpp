#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace cuspfa {

/// PCG64 (XSL-RR, setseq variant). Each (seed, stream) pair selects a
/// distinct sequence; identical pairs reproduce identical draws bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream) {
    const u128 initstate = (u128(mix64(seed + 0x9e3779b97f4a7c15ull)) << 64) | seed;
    const u128 initseq = (u128(mix64(stream ^ 0xda3e39cb94b95bdbull)) << 64) | stream;
    state_ = 0;
    inc_ = (initseq << 1) | 1;
    next_u64();
    state_ += initstate;
    next_u64();
    cached_ = false;
  }

  std::uint64_t next_u64() {
    state_ = state_ * kMultiplier + inc_;
    const std::uint64_t xored = static_cast<std::uint64_t>(state_ >> 64) ^ static_cast<std::uint64_t>(state_);
    const unsigned rot = static_cast<unsigned>(state_ >> 122);
    return (xored >> rot) | (xored << ((-rot) & 63u));
  }

  /// Uniform draw strictly inside (0,1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via the polar method; the spare deviate is cached.
  double normal() {
    if (cached_) {
      cached_ = false;
      return cache_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cache_ = v * f;
    cached_ = true;
    return u * f;
  }

 private:
  using u128 = unsigned __int128;
  static constexpr u128 kMultiplier = (u128(2549297995355413924ull) << 64) | 4865540595714422341ull;

  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  u128 state_ = 0;
  u128 inc_ = 1;
  bool cached_ = false;
  double cache_ = 0.0;

  friend std::uint64_t stable_mix(std::initializer_list<std::uint64_t>);
};

/// Order-sensitive 64-bit hash for deriving stream ids from structured keys
/// (e.g. {tag, scenario, prior, replicate}); stable across platforms.
inline std::uint64_t stable_mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ull;
  for (std::uint64_t p : parts) h = Rng::mix64(h ^ (p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
  return h;
}

}  // namespace cuspfa
