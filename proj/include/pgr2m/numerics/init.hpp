#pragma once

#include <cstdint>
#include <random>

#include "pgr2m/numerics/tensor.hpp"

namespace pgr2m::nn {

using Rng = std::mt19937_64;

// Deterministic child seed for stream `stream` of a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi);
// Normal init scaled by 1/sqrt(fan_in).
Tensor fan_in_init(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0);

double uniform01(Rng& rng);

}  // namespace pgr2m::nn
