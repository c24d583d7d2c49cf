#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pgr2m/io/config.hpp"
#include "pgr2m/numerics/module.hpp"
#include "pgr2m/numerics/optim.hpp"

// Container: "PGR2MCKP", u32 little-endian header length, JSON header, then
// the tensor blob as little-endian float32 in index order.
namespace pgr2m::io {

inline constexpr std::string_view kCheckpointFormat = "pgr2m-ckpt";
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Tensor value;
};

struct Checkpoint {
  std::string component;  // "tokenizer", "base" or "refine"
  Config config;
  std::string catalog_version;
  nlohmann::json catalog;   // full catalog, so a bundle is self-describing
  std::uint64_t step = 0;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
  std::int64_t optimizer_step = -1;  // -1 when no optimizer state is stored

  const nn::Tensor* find(const std::string& name) const;
  nlohmann::json header() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters in registration order; Adam moments under "adam.m/" and "adam.v/".
void store_params(Checkpoint& ckpt, const nn::ParamStore& params, const nn::AdamState* optimizer = nullptr);
// Every parameter must be present with its registered shape.
void restore_params(const Checkpoint& ckpt, nn::ParamStore& params);
std::optional<nn::AdamState> restore_optimizer(const Checkpoint& ckpt, const nn::ParamStore& params);

// Throws ValidationError unless the component tag matches.
void require_component(const Checkpoint& ckpt, std::string_view component, const std::filesystem::path& path);

}  // namespace pgr2m::io
