#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mata::core {

// SplitMix64 step. Used to expand seeds into generator state; the sequence of
// outputs for a given start value is fixed by the algorithm, not the platform.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// xoshiro256++ with hand-rolled distributions. std:: distributions are
// implementation-defined, so uniform/normal are derived here bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53 random mantissa bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without a cached spare: two uniforms per draw, fixed cost.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased integer on [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

// Splittable stream derivation: a master seed fans out into independent
// streams keyed by (label, index). Mixing through SplitMix64 keeps streams
// decorrelated even for adjacent indices.
inline Rng derive_rng(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
  std::uint64_t x = master;
  std::uint64_t a = splitmix64(x);
  x ^= fnv1a64(label);
  std::uint64_t b = splitmix64(x);
  x ^= index * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull;
  std::uint64_t c = splitmix64(x);
  return Rng(a ^ (b * 0x100000001b3ull) ^ c);
}

}  // namespace mata::core
