#include "pgr2m/numerics/init.hpp"

#include <cmath>

namespace pgr2m::nn {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(Rng& rng) {
  // 53 random bits; independent of the standard library's distribution code.
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

Tensor randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); i += 2) {
    // Box-Muller, both outputs used.
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    t[i] = static_cast<Scalar>(stddev * r * std::cos(2.0 * M_PI * u2));
    if (i + 1 < t.numel()) t[i + 1] = static_cast<Scalar>(stddev * r * std::sin(2.0 * M_PI * u2));
  }
  return t;
}

Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Scalar>(lo + (hi - lo) * uniform01(rng));
  return t;
}

Tensor fan_in_init(Shape shape, std::size_t fan_in, Rng& rng, double gain) {
  return randn(std::move(shape), rng, gain / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace pgr2m::nn
