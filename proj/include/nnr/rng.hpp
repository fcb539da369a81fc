#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace nnr {

//! splitmix64 step; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t state, std::uint64_t salt) {
  std::uint64_t z = state + 0x9e3779b97f4a7c15ULL + salt * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Deterministic, seedable generator. Normal variates use Box-Muller on the
//! raw 53-bit uniforms rather than std::normal_distribution, whose output is
//! implementation-defined; results are therefore stable across standard
//! libraries, which the reproducibility contract needs.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  //! Stream derived from (master seed, stream id); streams are independent,
  //! so trials can run in any order or thread count without interaction.
  static Rng stream(std::uint64_t master, std::uint64_t id) { return Rng(mix_seed(master, id)); }

  std::uint64_t next_u64() { return engine_(); }

  //! Uniform on (0, 1].
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace nnr
