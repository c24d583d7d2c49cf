#include "pgr2m/predictors/models.hpp"

#include <algorithm>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"

namespace pgr2m::pred {

namespace {

std::size_t longest(const std::vector<const pose::PoseCodeSequence*>& seqs) {
  std::size_t n = 0;
  for (const auto* s : seqs) n = std::max(n, s->steps);
  return n;
}

void check_batch(std::size_t texts, std::size_t other, const char* what) {
  if (texts != other || texts == 0) {
    throw DimensionError(std::string(what) + ": " + std::to_string(texts) + " texts for " + std::to_string(other) +
                         " sequences");
  }
}

}  // namespace

BaseTransformer::BaseTransformer(Config config, std::size_t codes, std::uint64_t seed)
    : config_(std::move(config)), codes_(codes) {
  config_.validate();
  nn::Rng rng(nn::derive_seed(seed, 0xba5e));
  const std::size_t D = config_.latent_dim;
  text_ = TextEmbedder::make(params_, "text", config_.text_slots, D, rng);
  row_in_ = nn::Linear::make(params_, "row_in", codes_ + 1, D, rng);
  positions_ = &params_.add("positions", nn::randn({config_.max_steps + 1, D}, rng, 0.02));
  stack_ = TransformerStack::make(params_, "stack", D, config_.layers, config_.heads, config_.mlp_ratio, rng);
  head_ = nn::Linear::make(params_, "head", D, codes_ + 1, rng);
}

Var BaseTransformer::forward(Tape& t, const std::vector<TextInput>& texts,
                             const std::vector<const pose::PoseCodeSequence*>& prefixes) const {
  check_batch(texts.size(), prefixes.size(), "base forward");
  const std::size_t B = prefixes.size(), N = codes_;
  const std::size_t Tm = longest(prefixes) + 1, C = kTextTokens, T = C + Tm;
  if (Tm > config_.max_steps + 1) {
    throw ConfigError("pose-code prefix of " + std::to_string(Tm - 1) + " rows exceeds max_steps " +
                      std::to_string(config_.max_steps));
  }
  Tensor rows({B, Tm, N + 1});
  Tensor mask({B, T, T}, kMasked);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& z = *prefixes[b];
    if (z.codes != N) throw DimensionError("pose codes have " + std::to_string(z.codes) + " columns, model has " + std::to_string(N));
    rows[(b * Tm) * (N + 1) + N] = 1;  // BOS channel
    for (std::size_t i = 0; i < z.steps; ++i)
      for (std::size_t n = 0; n < N; ++n) rows[(b * Tm + i + 1) * (N + 1) + n] = z.at(i, n);
    const std::size_t valid = C + z.steps + 1;
    for (std::size_t q = 0; q < T; ++q) {
      const std::size_t upto = q < C ? C : std::min(q + 1, valid);
      for (std::size_t k = 0; k < upto; ++k) mask[(b * T + q) * T + k] = 0;
    }
  }
  Var motion = nn::add_broadcast(row_in_(t, t.constant(std::move(rows))),
                                 nn::slice(nn::bind(t, *positions_), 0, 0, Tm));
  Var x = nn::concat({text_(t, texts), motion}, 1);
  Var y = stack_(t, x, mask);
  return head_(t, nn::slice(y, 1, C, T));
}

Tensor BaseTransformer::next_logits(const TextInput& text, const pose::PoseCodeSequence& prefix) const {
  Tape t(false);
  Var logits = forward(t, {text}, {&prefix});
  const std::size_t K = codes_ + 1;
  const Tensor& v = logits.value();
  Tensor out({K});
  std::copy_n(v.data() + prefix.steps * K, K, out.data());
  return out;
}

BaseTargets base_targets(const std::vector<const pose::PoseCodeSequence*>& sequences, std::size_t codes) {
  const std::size_t B = sequences.size(), Tm = longest(sequences) + 1, K = codes + 1;
  BaseTargets bt{Tensor({B, Tm, K}), Tensor({B, Tm, K})};
  for (std::size_t b = 0; b < B; ++b) {
    const auto& z = *sequences[b];
    const double w = 1.0 / (double(B) * double(z.steps + 1) * double(K));
    for (std::size_t i = 0; i <= z.steps; ++i) {
      for (std::size_t n = 0; n < K; ++n) {
        const std::size_t at = (b * Tm + i) * K + n;
        bt.weights[at] = static_cast<nn::Scalar>(w);
        if (i < z.steps && n < codes) bt.targets[at] = z.at(i, n);
      }
    }
    bt.targets[(b * Tm + z.steps) * K + codes] = 1;
  }
  return bt;
}

Var base_loss(Var logits, const BaseTargets& targets) { return nn::bce_with_logits(logits, targets.targets, targets.weights); }

RefineTransformer::RefineTransformer(Config config, std::size_t codes, std::uint64_t seed)
    : config_(std::move(config)), codes_(codes) {
  config_.validate();
  nn::Rng rng(nn::derive_seed(seed, 0x2ef1));
  const std::size_t D = config_.latent_dim;
  text_ = TextEmbedder::make(params_, "text", config_.text_slots, D, rng);
  pose_in_ = nn::Linear::make(params_, "pose_in", codes_, D, rng);
  for (std::size_t s = 0; s < config_.stages; ++s) {
    residual_tables_.push_back(
        &params_.add("residual" + std::to_string(s), nn::randn({config_.residual_codes, D}, rng, 0.02)));
  }
  stage_table_ = &params_.add("stage", nn::randn({config_.stages, D}, rng, 0.02));
  if (config_.positions) positions_ = &params_.add("positions", nn::randn({config_.max_steps, D}, rng, 0.02));
  stack_ = TransformerStack::make(params_, "stack", D, config_.layers, config_.heads, config_.mlp_ratio, rng);
  head_ = nn::Linear::make(params_, "head", D, config_.residual_codes, rng);
}

Var RefineTransformer::forward(Tape& t, const std::vector<TextInput>& texts,
                               const std::vector<const pose::PoseCodeSequence*>& codes,
                               const std::vector<const ResidualCodes*>& lower, std::size_t s) const {
  if (s >= config_.stages) {
    throw ConfigError("refine stage " + std::to_string(s + 1) + " outside 1.." + std::to_string(config_.stages));
  }
  check_batch(texts.size(), codes.size(), "refine forward");
  check_batch(texts.size(), lower.size(), "refine forward");
  const std::size_t B = codes.size(), N = codes_, D = config_.latent_dim;
  const std::size_t L = longest(codes), C = kTextTokens, T = C + L;
  if (L > config_.max_steps) {
    throw ConfigError("pose-code sequence of " + std::to_string(L) + " rows exceeds max_steps " +
                      std::to_string(config_.max_steps));
  }
  Tensor rows({B, L, N});
  Tensor mask({B, T, T}, kMasked);
  std::vector<std::vector<long>> idx(s, std::vector<long>(B * L, -1));
  for (std::size_t b = 0; b < B; ++b) {
    const auto& z = *codes[b];
    if (z.codes != N) throw DimensionError("pose codes have " + std::to_string(z.codes) + " columns, model has " + std::to_string(N));
    if (lower[b]->size() < s) throw DimensionError("refine stage " + std::to_string(s + 1) + " needs " + std::to_string(s) + " lower stages");
    for (std::size_t i = 0; i < z.steps; ++i)
      for (std::size_t n = 0; n < N; ++n) rows[(b * L + i) * N + n] = z.at(i, n);
    for (std::size_t p = 0; p < s; ++p) {
      const auto& r = (*lower[b])[p];
      if (r.size() != z.steps) throw DimensionError("residual stage " + std::to_string(p + 1) + " length differs from pose codes");
      for (std::size_t i = 0; i < z.steps; ++i) idx[p][b * L + i] = static_cast<long>(r[i]);
    }
    const std::size_t valid = C + z.steps;
    for (std::size_t q = 0; q < T; ++q)
      for (std::size_t k = 0; k < valid; ++k) mask[(b * T + q) * T + k] = 0;
  }
  Var x = pose_in_(t, t.constant(std::move(rows)));
  for (std::size_t p = 0; p < s; ++p) {
    x = nn::add(x, nn::reshape(nn::embedding(nn::bind(t, *residual_tables_[p]), idx[p]), {B, L, D}));
  }
  x = nn::add_broadcast(x, nn::reshape(nn::slice(nn::bind(t, *stage_table_), 0, s, s + 1), {D}));
  if (positions_) x = nn::add_broadcast(x, nn::slice(nn::bind(t, *positions_), 0, 0, L));
  Var y = stack_(t, nn::concat({text_(t, texts), x}, 1), mask);
  return head_(t, nn::slice(y, 1, C, T));
}

Var refine_loss(Var logits, const std::vector<const ResidualCodes*>& targets, std::size_t s) {
  const std::size_t B = logits.dim(0), L = logits.dim(1);
  if (targets.size() != B) throw DimensionError("refine loss: target count differs from batch");
  std::vector<std::size_t> tgt(B * L, 0);
  std::vector<nn::Scalar> w(B * L, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& r = targets[b]->at(s);
    if (r.size() > L) throw DimensionError("refine loss: target longer than logits");
    for (std::size_t i = 0; i < r.size(); ++i) {
      tgt[b * L + i] = r[i];
      w[b * L + i] = static_cast<nn::Scalar>(1.0 / (double(B) * double(r.size())));
    }
  }
  return nn::cross_entropy(logits, tgt, w);
}

}  // namespace pgr2m::pred
