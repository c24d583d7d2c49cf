#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pgr2m/motion/motion.hpp"
#include "pgr2m/numerics/optim.hpp"
#include "pgr2m/predictors/models.hpp"
#include "pgr2m/tokenizer/tokenizer.hpp"

namespace pgr2m::pred {

// Ground-truth targets of one captioned motion.
struct Example {
  TextInput text;
  pose::PoseCodeSequence pose;
  ResidualCodes residual;  // empty unless requested
};

// Parses pose codes and, with residuals, tokenizes through the frozen tokenizer.
// Parallel across motions.
std::vector<Example> make_examples(const tok::Tokenizer& tokenizer, const std::vector<const motion::Motion*>& motions,
                                   bool with_residuals);

struct PredictorTrainOptions {
  std::size_t steps = 0;  // 0 takes base_steps / refine_steps from the config
  std::function<void(const nlohmann::json&)> on_log;
  std::optional<nn::AdamState> resume;
  bool keep_best = true;
};

struct PredictorTrainResult {
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
  std::size_t final_step = 0;
  nn::AdamState optimizer;
  std::vector<nlohmann::json> log;
};

// Teacher-forced mean BCE over every example.
double evaluate_base(const BaseTransformer& model, const std::vector<Example>& examples);

struct RefineEval {
  std::vector<double> stage_ce;        // mean cross-entropy per stage
  std::vector<double> stage_accuracy;  // top-1 per stage with ground-truth lower stages
  double mean_ce = 0.0;
};
RefineEval evaluate_refine(const RefineTransformer& model, const std::vector<Example>& examples);

PredictorTrainResult train_base(BaseTransformer& model, const std::vector<Example>& train,
                                const std::vector<Example>& val, const PredictorTrainOptions& options = {});
// Each step draws one stage uniformly and conditions on ground-truth lower stages.
PredictorTrainResult train_refine(RefineTransformer& model, const std::vector<Example>& train,
                                  const std::vector<Example>& val, const PredictorTrainOptions& options = {});

}  // namespace pgr2m::pred
