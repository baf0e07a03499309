#pragma once

// Splittable counter-based RNG used everywhere randomness is needed
// (weight init, data generation, masking, negative sampling, shuffles).
//
// Construction: a stream is keyed by a 64-bit state. `split(tag)` derives an
// independent child stream from (state, tag) without consuming draws from the
// parent, so replay never depends on draw order elsewhere in the program.
// The core generator is SplitMix64 (Steele, Lea, Flood 2014); distributions
// are hand-rolled on top of it so sequences are identical on every platform.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace ggp {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // SplitMix64 step.
  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection-free multiply-shift (documented bias
  // < 2^-32 for n < 2^32, irrelevant at our n).
  uint64_t next_range(uint64_t n) {
    if (n == 0) throw std::runtime_error("Rng::next_range: n must be positive");
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller (two uniforms per draw, no caching, so the
  // stream position is a pure function of the draw count).
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Derive an independent child stream keyed by (state, tag [, index]).
  Rng split(std::string_view tag, uint64_t index = 0) const {
    uint64_t h = state_ ^ 0x632be59bd9b4e019ULL;
    for (char c : tag) h = (h ^ static_cast<uint64_t>(static_cast<unsigned char>(c))) * 0x100000001b3ULL;
    h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    Rng child(h);
    child.next_u64();  // decorrelate from the raw key
    return Rng(child.state_);
  }

  // Fisher-Yates permutation of {0..n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(next_range(static_cast<uint64_t>(i) + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace ggp
