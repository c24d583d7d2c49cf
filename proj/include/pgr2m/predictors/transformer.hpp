#pragma once

#include <vector>

#include "pgr2m/numerics/module.hpp"

namespace pgr2m::pred {

using nn::Tape;
using nn::Tensor;
using nn::Var;

inline constexpr float kMasked = -1e9f;

// Pre-norm transformer: x += attn(norm(x)); x += mlp(norm(x)), RMSNorm and a
// ReLU MLP, followed by a final norm.
class TransformerStack {
 public:
  static TransformerStack make(nn::ParamStore& ps, const std::string& name, std::size_t dim, std::size_t layers,
                               std::size_t heads, std::size_t mlp_ratio, nn::Rng& rng);
  // x: [B, T, D]; mask: [B, T, T] additive (0 visible, kMasked hidden), query rows.
  Var operator()(Tape& t, Var x, const Tensor& mask) const;

 private:
  struct Block {
    const nn::Parameter *norm1, *norm2;
    nn::Linear q, k, v, o, fc1, fc2;
  };
  Var attention(Tape& t, const Block& b, Var x, const Tensor& head_mask) const;

  std::vector<Block> blocks_;
  const nn::Parameter* final_norm_ = nullptr;
  std::size_t heads_ = 1;
};

}  // namespace pgr2m::pred
