#pragma once

#include <vector>

#include "pgr2m/io/config.hpp"
#include "pgr2m/pose/posecodes.hpp"
#include "pgr2m/predictors/text.hpp"
#include "pgr2m/predictors/transformer.hpp"

namespace pgr2m::pred {

using ResidualCodes = std::vector<std::vector<std::size_t>>;  // S x L_d

// Decoder-only model over [12 text tokens, BOS, z_1 .. z_L]. Text tokens see
// only text; motion positions see all text and earlier motion positions.
class BaseTransformer {
 public:
  BaseTransformer(Config config, std::size_t codes, std::uint64_t seed);
  BaseTransformer(BaseTransformer&&) = default;

  const Config& config() const noexcept { return config_; }
  std::size_t codes() const noexcept { return codes_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }

  // Teacher-forced logits [B, T, N+1] with T = 1 + longest prefix; position j
  // predicts row j+1 given rows 1..j, the last column being END.
  Var forward(Tape& t, const std::vector<TextInput>& texts,
              const std::vector<const pose::PoseCodeSequence*>& prefixes) const;
  // Logits [N+1] of the row following `prefix`.
  Tensor next_logits(const TextInput& text, const pose::PoseCodeSequence& prefix) const;

 private:
  Config config_;
  std::size_t codes_;
  nn::ParamStore params_;
  TextEmbedder text_;
  nn::Linear row_in_;
  const nn::Parameter* positions_ = nullptr;
  TransformerStack stack_;
  nn::Linear head_;
};

// Targets and weights for BaseTransformer::forward: rows z_1..z_L with END 0,
// then an all-zero row with END 1; each sample's entries average to weight 1/B.
struct BaseTargets {
  Tensor targets;  // [B, T, N+1]
  Tensor weights;
};
BaseTargets base_targets(const std::vector<const pose::PoseCodeSequence*>& sequences, std::size_t codes);
Var base_loss(Var logits, const BaseTargets& targets);

// Encoder-only model over [12 text tokens, L frame tokens] predicting the
// stage-s residual code of every frame.
class RefineTransformer {
 public:
  RefineTransformer(Config config, std::size_t codes, std::uint64_t seed);
  RefineTransformer(RefineTransformer&&) = default;

  const Config& config() const noexcept { return config_; }
  std::size_t codes() const noexcept { return codes_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }

  // Logits [B, L, N_r] for zero-based stage s. `lower[b]` holds at least s
  // stage rows (only the first s are read). ConfigError when s >= S.
  Var forward(Tape& t, const std::vector<TextInput>& texts, const std::vector<const pose::PoseCodeSequence*>& codes,
              const std::vector<const ResidualCodes*>& lower, std::size_t s) const;

 private:
  Config config_;
  std::size_t codes_;
  nn::ParamStore params_;
  TextEmbedder text_;
  nn::Linear pose_in_;
  std::vector<const nn::Parameter*> residual_tables_;  // [N_r, D] per stage
  const nn::Parameter* stage_table_ = nullptr;         // [S, D]
  const nn::Parameter* positions_ = nullptr;           // [max_steps, D] when enabled
  TransformerStack stack_;
  nn::Linear head_;
};

// Per-sample mean cross-entropy over valid frames, averaged over the batch.
Var refine_loss(Var logits, const std::vector<const ResidualCodes*>& targets, std::size_t s);

}  // namespace pgr2m::pred
