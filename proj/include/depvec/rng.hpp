#pragma once

#include <cstdint>
#include <random>

namespace depvec {

// Seeded RNG with hand-rolled uniform/normal draws. std:: distributions are
// implementation-defined, so draws go through fixed bit manipulation to keep
// runs reproducible for a given seed on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0,1) with 53 random bits
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two fresh uniforms per draw (no cached second value)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // uniform integer in [0, n), rejection sampled to avoid modulo bias
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // derive an independent stream; mixing is splitmix64 over (state, id)
  Rng fork(std::uint64_t stream_id) const {
    std::uint64_t x = seed_hash_ ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
    x = splitmix(x);
    Rng child(x);
    child.seed_hash_ = x;
    return child;
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static Rng seeded(std::uint64_t seed) {
    Rng r(splitmix(seed));
    r.seed_hash_ = splitmix(seed);
    return r;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_hash_ = 0;
};

}  // namespace depvec
