#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace terrafill {

// Seed-explicit RNG. Distribution transforms are hand-rolled so that streams
// are reproducible across standard-library implementations; std::*_distribution
// output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : eng_(seed), seed_hash_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(eng_() % span);
  }

  // standard normal, Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Derived independent stream, e.g. one per evaluation sample.
  Rng fork(std::uint64_t stream_id) const {
    return Rng(splitmix64(seed_hash_ ^ splitmix64(stream_id)));
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_hash_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace terrafill
