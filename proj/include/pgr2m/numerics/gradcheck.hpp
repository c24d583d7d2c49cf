#pragma once

#include <functional>
#include <vector>

#include "pgr2m/numerics/tape.hpp"

namespace pgr2m::nn {

// Max over coordinates of |g_ad - g_fd| / max(1, |g_fd|), with g_fd from
// central differences of step h. Throws NumericError when f is not finite.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-3);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // parameter name and flat index of the worst coordinate
};

// Same comparison over parameter coordinates. Detached values are pinned at the
// unperturbed evaluation, so stop-gradient and straight-through paths count as
// constants on both sides. At most `max_coords_per_param`
// coordinates are probed per parameter, spread evenly over its elements
// (0 means all of them).
GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double h = 1e-3, std::size_t max_coords_per_param = 0);

}  // namespace pgr2m::nn
