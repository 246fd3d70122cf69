#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace crffuse {

// Deterministic PRNG with portable output mappings. std::mt19937_64 is
// specified bit-exactly by the standard; the standard *distributions* are
// implementation-defined, so raw draws are mapped to doubles here instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1.
  std::uint64_t bounded(std::uint64_t n) {
    std::uint64_t r = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return r >= n ? n - 1 : r;
  }

  // Standard normal via Box-Muller; consumes two raw draws.
  double normal() {
    double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double std_dev) { return mean + std_dev * normal(); }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 gen_;
};

}  // namespace crffuse
