#pragma once

#include "pgr2m/numerics/init.hpp"
#include "pgr2m/pose/catalog.hpp"
#include "pgr2m/predictors/models.hpp"

namespace pgr2m::pred {

enum class SampleMode { deterministic, stochastic };

SampleMode parse_sample_mode(std::string_view s);
std::string_view to_string(SampleMode m);

struct SampleOptions {
  SampleMode mode = SampleMode::deterministic;
  double temperature = 1.0;  // stochastic mode only
};

// Within every exclusive family with zero or several active codes, keeps only
// the most probable one. Flag families are left as sampled.
void repair_families(const pose::Catalog& catalog, const std::vector<double>& probabilities,
                     std::vector<std::uint8_t>& active);

// Rolls out rows until END is active or max_steps rows exist. The result may
// be empty when END fires on the first step.
pose::PoseCodeSequence sample_pose_codes(const BaseTransformer& model, const pose::Catalog& catalog,
                                         const TextInput& text, const SampleOptions& options, nn::Rng& rng);

// Stages 1..S in order, each predicted for all frames at once given the lower ones.
ResidualCodes sample_residual_codes(const RefineTransformer& model, const TextInput& text,
                                    const pose::PoseCodeSequence& pose, const SampleOptions& options, nn::Rng& rng);

}  // namespace pgr2m::pred
