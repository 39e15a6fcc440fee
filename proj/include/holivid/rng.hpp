#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace holivid {

// Deterministic PRNG used everywhere randomness is needed.  splitmix64 has a
// fixed, well-known update rule, so streams are reproducible across platforms
// and standard library versions (std::mt19937's distributions are not
// guaranteed to produce identical sequences across implementations).
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).  53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).  n must be > 0.
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (one value per call; the pair's second
  // member is discarded to keep the stream layout simple).
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  uint64_t state_;
};

// Derives an independent sub-seed from (seed, tag, a, b).  Used so that each
// video / epoch / parameter tensor gets its own stream regardless of the
// order in which streams are consumed.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = seed ^ 0x51f15eedcafef00dULL;
  auto mix = [&h](uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
  };
  for (char c : tag) mix(static_cast<uint64_t>(static_cast<unsigned char>(c)));
  mix(a);
  mix(b);
  return h;
}

}  // namespace holivid
