#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "pgr2m/error.hpp"
#include "pgr2m/io/checkpoint.hpp"
#include "pgr2m/predictors/models.hpp"
#include "pgr2m/predictors/sampling.hpp"
#include "pgr2m/tokenizer/tokenizer.hpp"

// A model bundle is a directory holding tokenizer.ckpt, base.ckpt and refine.ckpt.
namespace pgr2m {

struct EmptyGenerationError : ValidationError {
  explicit EmptyGenerationError(const std::string& what) : ValidationError("empty generation: " + what) {}
};

void save_base(const std::filesystem::path& path, const pred::BaseTransformer& model, const pose::Catalog& catalog,
               std::uint64_t step, const nlohmann::json& metrics = {}, const nn::AdamState* optimizer = nullptr);
void save_refine(const std::filesystem::path& path, const pred::RefineTransformer& model, const pose::Catalog& catalog,
                 std::uint64_t step, const nlohmann::json& metrics = {}, const nn::AdamState* optimizer = nullptr);
pred::BaseTransformer base_from_checkpoint(const io::Checkpoint& ckpt, const std::optional<Config>& runtime = std::nullopt);
pred::RefineTransformer refine_from_checkpoint(const io::Checkpoint& ckpt,
                                               const std::optional<Config>& runtime = std::nullopt);

struct Bundle {
  tok::Tokenizer tokenizer;
  pred::BaseTransformer base;
  pred::RefineTransformer refine;
  std::string id;  // content hash of the three checkpoint files

  const pose::Catalog& catalog() const noexcept { return tokenizer.catalog(); }
  const Config& config() const noexcept { return tokenizer.config(); }
};

// Checks catalog versions and structural keys across the three components.
Bundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const std::filesystem::path& dir, const Bundle& bundle);
std::filesystem::path bundle_file(const std::filesystem::path& dir, std::string_view component);

struct Generation {
  motion::Motion motion;
  pose::PoseCodeSequence pose;
  pred::ResidualCodes residual;
};

// Text -> pose codes -> residual codes -> decoded motion at the origin.
// EmptyGenerationError when END fires before the first row.
Generation generate(const Bundle& bundle, const std::string& caption, const std::vector<std::string>& keywords,
                    const pred::SampleOptions& options, std::uint64_t seed);

// Decoded motion for given codes, placed at the origin (or a supplied origin).
motion::Motion decode_motion(const tok::Tokenizer& tokenizer, const pose::PoseCodeSequence& pose,
                             const pred::ResidualCodes& residual, double origin_x = 0.0, double origin_z = 0.0);

}  // namespace pgr2m
