#pragma once

#include "pgr2m/motion/motion.hpp"
#include "pgr2m/numerics/tape.hpp"

// The network sees motions in a canonical frame: the first root position is
// moved to the horizontal origin, every joint is expressed relative to the
// root, and the root slot carries horizontal velocity (m/s) plus height.
namespace pgr2m::tok {

struct CanonicalMotion {
  nn::Tensor features;   // [L, 48]
  nn::Tensor positions;  // [L, 48], translated global positions
  double origin_x = 0.0;
  double origin_z = 0.0;
};

CanonicalMotion canonicalize(const motion::Motion& m);

// Undo the horizontal translation of [L, 48] canonical positions. Frames whose
// root lies below the floor are raised onto it.
motion::Motion restore_origin(const nn::Tensor& positions, double origin_x, double origin_z);

// Features [B, L, 48] -> canonical global positions [B, L, 48] by integrating
// the root velocity from the origin. Linear, differentiable.
nn::Var integrate_root(nn::Var features);

// Joint-space view of [B, L, 48] positions for the reconstruction loss: the
// root keeps its position and every other joint is taken relative to it, so
// trajectory drift is counted once instead of in all 16 joints. Linear.
nn::Tensor joint_space(const nn::Tensor& positions);
nn::Var joint_space(nn::Var positions);

}  // namespace pgr2m::tok
