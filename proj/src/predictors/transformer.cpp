#include "pgr2m/predictors/transformer.hpp"

#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"

namespace pgr2m::pred {

TransformerStack TransformerStack::make(nn::ParamStore& ps, const std::string& name, std::size_t dim,
                                        std::size_t layers, std::size_t heads, std::size_t mlp_ratio, nn::Rng& rng) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("width " + std::to_string(dim) + " not divisible by heads");
  TransformerStack s;
  s.heads_ = heads;
  // Residual branch outputs start small so the initial stack is close to identity.
  const double out_gain = 1.0 / std::sqrt(2.0 * double(layers));
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    Block b;
    b.norm1 = &ps.add(p + ".norm1", Tensor({dim}, 1.0f));
    b.q = nn::Linear::make(ps, p + ".q", dim, dim, rng, false);
    b.k = nn::Linear::make(ps, p + ".k", dim, dim, rng, false);
    b.v = nn::Linear::make(ps, p + ".v", dim, dim, rng, false);
    b.o = nn::Linear::make(ps, p + ".o", dim, dim, rng, true, out_gain);
    b.norm2 = &ps.add(p + ".norm2", Tensor({dim}, 1.0f));
    b.fc1 = nn::Linear::make(ps, p + ".fc1", dim, dim * mlp_ratio, rng);
    b.fc2 = nn::Linear::make(ps, p + ".fc2", dim * mlp_ratio, dim, rng, true, out_gain);
    s.blocks_.push_back(b);
  }
  s.final_norm_ = &ps.add(name + ".norm", Tensor({dim}, 1.0f));
  return s;
}

Var TransformerStack::attention(Tape& t, const Block& b, Var x, const Tensor& head_mask) const {
  const std::size_t B = x.dim(0), T = x.dim(1), D = x.dim(2), H = heads_, dh = D / H;
  auto split = [&](Var y) { return nn::reshape(nn::permute(nn::reshape(y, {B, T, H, dh}), {0, 2, 1, 3}), {B * H, T, dh}); };
  Var q = split(b.q(t, x)), k = split(b.k(t, x)), v = split(b.v(t, x));
  Var scores = nn::add(nn::scale(nn::bmm(q, k, true), nn::Scalar(1.0 / std::sqrt(double(dh)))), t.constant(head_mask));
  Var ctx = nn::bmm(nn::softmax_rows(scores), v);
  ctx = nn::reshape(nn::permute(nn::reshape(ctx, {B, H, T, dh}), {0, 2, 1, 3}), {B, T, D});
  return b.o(t, ctx);
}

Var TransformerStack::operator()(Tape& t, Var x, const Tensor& mask) const {
  const std::size_t B = x.dim(0), T = x.dim(1);
  if (mask.shape() != nn::Shape{B, T, T}) throw DimensionError("attention mask must be [B, T, T]");
  Tensor head_mask({B * heads_, T, T});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads_; ++h)
      std::copy_n(mask.data() + b * T * T, T * T, head_mask.data() + (b * heads_ + h) * T * T);
  for (const auto& blk : blocks_) {
    x = nn::add(x, attention(t, blk, nn::rmsnorm(x, nn::bind(t, *blk.norm1)), head_mask));
    Var hdn = nn::relu(blk.fc1(t, nn::rmsnorm(x, nn::bind(t, *blk.norm2))));
    x = nn::add(x, blk.fc2(t, hdn));
  }
  return nn::rmsnorm(x, nn::bind(t, *final_norm_));
}

}  // namespace pgr2m::pred
