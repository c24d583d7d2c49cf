#pragma once

#include <optional>
#include <vector>

#include "pgr2m/io/config.hpp"
#include "pgr2m/motion/motion.hpp"
#include "pgr2m/numerics/module.hpp"
#include "pgr2m/pose/posecodes.hpp"

namespace pgr2m::tok {

using nn::Tape;
using nn::Tensor;
using nn::Var;

struct StageOutput {
  Var rhat;   // hard-assignment quantized residual [M, D_c]
  Var rsoft;  // soft counterpart [M, D_c]
  Var soft;   // selection distribution rows [M, N_r]
  std::vector<std::size_t> indices;
};

struct RvqOutput {
  Var zhat;            // pose latents [M, D_c]
  Var F;               // fused latent [B, L_d, D_c]
  std::vector<Var> r;  // r^(1) .. r^(S+1), each [M, D_c]
  std::vector<StageOutput> stages;
  bool residuals_used = true;
};

// Pose-guided RVQ tokenizer: pose codebook, convolutional encoder/decoder and
// S residual quantizer stages.
class Tokenizer {
 public:
  Tokenizer(Config config, pose::Catalog catalog, std::uint64_t seed);
  Tokenizer(Tokenizer&&) = default;

  const Config& config() const noexcept { return config_; }
  const pose::Catalog& catalog() const noexcept { return catalog_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  std::size_t codes() const noexcept { return catalog_.size(); }
  std::size_t stages() const noexcept { return stages_.size(); }
  const nn::Parameter& pose_codebook() const { return *pose_codebook_; }

  // [B, L, 48] canonical features -> h [B, L/l, D_c]. ConfigError unless l divides L.
  Var encode(Tape& t, Var features) const;
  // Indicators [B, L_d, N] -> pose latents [B, L_d, D_c].
  Var pose_latents(Tape& t, const Tensor& indicators) const;
  // V^(s) = R^(s) W_V^(s), [N_r, D_c]. Stage s is zero-based.
  Var values(Tape& t, std::size_t s) const;
  // Quantizes residual rows r [M, D_c] at stage s.
  StageOutput quantize_stage(Tape& t, Var r, std::size_t s) const;
  // zhat, h: [B, L_d, D_c]. A draw below tau drops every residual from F;
  // no draw (inference) keeps them.
  RvqOutput quantize(Tape& t, Var zhat, Var h, std::optional<double> dropout_draw) const;
  // Fused latent [B, L_d, D_c] -> canonical joint positions [B, L, 48].
  Var decode(Tape& t, Var F) const;
  // zhat + sum_s V^(s)[indices_s]; the same arithmetic as quantize() at inference.
  Var fuse(Tape& t, Var zhat, const std::vector<std::vector<std::size_t>>& indices) const;

 private:
  struct ResBlock {
    nn::Conv1d a, b;
  };
  struct Stage {
    const nn::Parameter* codebook;  // R [N_r, D_c]
    const nn::Parameter* wq;
    const nn::Parameter* wk;
    const nn::Parameter* wv;
    const nn::Parameter* gq;
    const nn::Parameter* gk;
  };

  Var res_block(Tape& t, const ResBlock& blk, Var x) const;

  Config config_;
  pose::Catalog catalog_;
  nn::ParamStore params_;
  const nn::Parameter* pose_codebook_ = nullptr;
  nn::Conv1d enc_in_, enc_out_, dec_in_, dec_mid_, dec_out_;
  std::vector<nn::Conv1d> enc_down_, dec_up_;
  std::vector<std::vector<ResBlock>> enc_res_, dec_res_;
  std::vector<Stage> stages_;
};

// Mean absolute error over all entries.
Var loss_motion(Var prediction, const Tensor& target);
struct RvqTerms {
  Var commit;    // |sg(rhat) - r|^2
  Var codebook;  // beta |rhat - sg(r)|^2
  Var soft;      // |rsoft - r|^2
};
RvqTerms rvq_stage_terms(const RvqOutput& q, std::size_t s, double beta);
// Stage mean of |sg(rhat) - r|^2 + beta |rhat - sg(r)|^2 + |rsoft - r|^2, each a mean over entries.
Var loss_rvq(const RvqOutput& q, double beta);
// gamma * stage mean of (mean row entropy - entropy of the mean row), nats.
Var loss_entropy(const std::vector<Var>& soft_rows, double gamma);

struct TokenizerLoss {
  Var total, motion, rvq, entropy;
};
TokenizerLoss tokenizer_loss(const Tokenizer& model, const RvqOutput& q, Var reconstruction, const Tensor& target);

// exp of the entropy of a usage distribution.
double perplexity(const std::vector<double>& usage);
// Mean over stages.
double perplexity(const std::vector<std::vector<double>>& usage);
std::vector<double> usage_histogram(const std::vector<std::size_t>& indices, std::size_t codes);

// Training batch of equal-length clips.
struct Batch {
  Tensor features;    // [B, L, 48]
  Tensor positions;   // [B, L, 48]
  Tensor indicators;  // [B, L_d, N]
};
Batch make_batch(const pose::Catalog& catalog, const std::vector<motion::Motion>& clips, std::size_t stride);

// Discrete representation of one motion.
struct Tokens {
  pose::PoseCodeSequence pose;
  std::vector<std::vector<std::size_t>> residual;  // S x L_d
  double origin_x = 0.0;
  double origin_z = 0.0;
};

Tokens tokenize(const Tokenizer& model, const motion::Motion& m);
// Canonical positions [L, 48] from pose codes and the given residual stages
// (empty for pose-only decoding).
Tensor decode_tokens(const Tokenizer& model, const pose::PoseCodeSequence& pose,
                     const std::vector<std::vector<std::size_t>>& residual);
// Full-residual reconstruction placed back at the original origin.
motion::Motion reconstruct(const Tokenizer& model, const Tokens& tokens);

}  // namespace pgr2m::tok
