#ifndef SPARSEVB_RNG_HPP
#define SPARSEVB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sparsevb {

// Deterministic normal sampler (Box-Muller over mt19937_64). Used instead
// of std::normal_distribution so outputs are identical across standard
// library implementations.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double uniform01() {
    // 53-bit mantissa uniform in (0, 1]
    return (double(rng_() >> 11) + 1.0) * 0x1p-53;
  }

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sparsevb

#endif
