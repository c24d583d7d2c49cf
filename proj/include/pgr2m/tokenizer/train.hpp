#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "pgr2m/numerics/optim.hpp"
#include "pgr2m/tokenizer/tokenizer.hpp"

namespace pgr2m::tok {

struct TokenizerEval {
  double l1_full = 0.0;       // mean absolute joint error, all residual stages
  double l1_pose_only = 0.0;  // F = pose latents only
  std::vector<double> stage_perplexity;
  double perplexity = 0.0;  // stage mean
  double orthogonality = 0.0;
  std::vector<double> residual_norms;  // mean |r^(s)| per row, s = 1..S+1
  std::size_t motions = 0;
};

// Full-length forward passes over the given motions; parallel across motions.
TokenizerEval evaluate_tokenizer(const Tokenizer& model, const std::vector<const motion::Motion*>& motions);
nlohmann::json to_json(const TokenizerEval& e);

struct TrainOptions {
  std::size_t steps = 0;  // total optimizer steps; 0 takes the config value
  std::function<void(const nlohmann::json&)> on_log;  // one record per evaluation
  std::optional<nn::AdamState> resume;                // continues the step counter
  bool keep_best = true;  // restore the parameters with the best validation loss_motion
};

struct TrainResult {
  double best_val_l1 = 0.0;
  std::size_t best_step = 0;
  std::size_t final_step = 0;
  nn::AdamState optimizer;
  std::vector<nlohmann::json> log;
};

// Minimizes loss_motion + loss_rvq + loss_entropy on random windows of the
// training motions with Adam and linear warm-up. Throws NumericError on a
// non-finite loss.
TrainResult train_tokenizer(Tokenizer& model, const std::vector<const motion::Motion*>& train,
                            const std::vector<const motion::Motion*>& val, const TrainOptions& options = {});

}  // namespace pgr2m::tok
