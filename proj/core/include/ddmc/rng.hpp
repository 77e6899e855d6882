#pragma once

#include <cmath>
#include <cstdint>

namespace ddmc {

// splitmix64 stream. Small, fast, and fully specified here so every draw in
// the project is reproducible from a 64-bit seed regardless of toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // index in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    // Box-Muller, one value per pair of uniforms; u1 in (0, 1].
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.28318530717958647692 * u2);
  }

  double gumbel() {
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    double l = -std::log(u);
    if (l < 1e-300) l = 1e-300;
    return -std::log(l);
  }

 private:
  std::uint64_t state_;
};

// Decorrelated child seed for a named stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  Rng r(base ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
  return r.next_u64();
}

}  // namespace ddmc
