#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace pgr2m {

// Every hyperparameter of the pipeline. Defaults are the desk profile.
struct Config {
  std::uint64_t seed = 1;

  // Tokenizer structure.
  std::size_t stride = 4;            // l
  std::size_t stages = 4;            // S
  std::size_t residual_codes = 128;  // N_r
  std::size_t latent_dim = 128;      // D_c
  std::size_t key_dim = 64;          // D_k
  std::size_t enc_width = 128;
  std::size_t enc_blocks = 1;        // residual blocks per resolution level
  std::string quantizer = "attention";  // attention | distance
  std::string catalog;               // catalog file; empty selects the shipped catalog

  // Tokenizer objective and training.
  double tau = 0.1;
  bool residual_dropout = true;
  double beta = 0.25;
  double gamma = 0.01;
  std::size_t window = 64;
  std::size_t batch = 32;
  double lr = 2e-4;
  std::size_t warmup = 1000;
  std::size_t tokenizer_steps = 4000;
  std::size_t eval_every = 250;
  double grad_clip = 1.0;

  // Predictors.
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t text_slots = 4096;
  std::size_t max_steps = 64;
  bool positions = true;
  std::size_t base_steps = 1500;
  std::size_t refine_steps = 1500;
  std::size_t predictor_batch = 32;
  double predictor_lr = 2e-4;
  std::size_t predictor_warmup = 1000;
  double temperature = 1.0;

  nlohmann::json to_json() const;
  static Config from_json(const nlohmann::json& j);
  // key = value lines; '#' starts a comment. Unknown keys are rejected.
  static Config parse(const std::string& text, const std::string& origin = "config");
  static Config load(const std::filesystem::path& path);
  std::string to_text() const;

  void set(const std::string& key, const std::string& value);
  void validate() const;
};

// Keys that fix tensor shapes or model semantics.
const std::vector<std::string>& structural_keys();
// Throws ValidationError naming the first structural key that differs.
void require_structural_match(const Config& checkpoint, const Config& runtime, const std::string& what);

}  // namespace pgr2m
