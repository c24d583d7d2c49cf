#pragma once

#include <filesystem>
#include <optional>

#include "pgr2m/io/checkpoint.hpp"
#include "pgr2m/tokenizer/tokenizer.hpp"

namespace pgr2m::tok {

io::Checkpoint tokenizer_checkpoint(const Tokenizer& model, std::uint64_t step, const nlohmann::json& metrics = {},
                                    const nn::AdamState* optimizer = nullptr);
// Rebuilds the model from a checkpoint. With a runtime config, structural keys
// must agree (ValidationError otherwise).
Tokenizer tokenizer_from_checkpoint(const io::Checkpoint& ckpt, const std::optional<Config>& runtime = std::nullopt);

void save_tokenizer(const std::filesystem::path& path, const Tokenizer& model, std::uint64_t step,
                    const nlohmann::json& metrics = {}, const nn::AdamState* optimizer = nullptr);
Tokenizer load_tokenizer(const std::filesystem::path& path, const std::optional<Config>& runtime = std::nullopt);

}  // namespace pgr2m::tok
