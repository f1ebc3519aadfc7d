#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace adasamp {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for repeat `repeat` of arm `arm` under a master seed:
/// mix64(mix64(mix64(master) ^ arm) ^ repeat).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t arm,
                                    std::uint64_t repeat) noexcept {
  return mix64(mix64(mix64(master) ^ arm) ^ repeat);
}

/// Platform-stable random stream.
///
/// std::mt19937_64 output is fixed by the standard, but the std::*_distribution
/// adaptors are not, so the transforms here are written out: uniforms take the
/// top 53 bits, normals use the polar-free Box-Muller transform and cache the
/// second variate.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound).
  std::size_t index(std::size_t bound) {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(bound));
    return k < bound ? k : bound - 1;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace adasamp
