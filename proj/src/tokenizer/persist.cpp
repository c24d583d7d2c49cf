#include "pgr2m/tokenizer/persist.hpp"

#include "pgr2m/error.hpp"

namespace pgr2m::tok {

io::Checkpoint tokenizer_checkpoint(const Tokenizer& model, std::uint64_t step, const nlohmann::json& metrics,
                                    const nn::AdamState* optimizer) {
  io::Checkpoint c;
  c.component = "tokenizer";
  c.config = model.config();
  c.catalog_version = model.catalog().version();
  c.catalog = model.catalog().to_json();
  c.step = step;
  if (!metrics.is_null()) c.metrics = metrics;
  io::store_params(c, model.params(), optimizer);
  return c;
}

Tokenizer tokenizer_from_checkpoint(const io::Checkpoint& ckpt, const std::optional<Config>& runtime) {
  if (ckpt.component != "tokenizer") throw ValidationError("expected a tokenizer checkpoint, got '" + ckpt.component + "'");
  if (runtime) require_structural_match(ckpt.config, *runtime, "tokenizer checkpoint");
  pose::Catalog catalog = pose::Catalog::from_json(ckpt.catalog);
  if (catalog.version() != ckpt.catalog_version) {
    throw ValidationError("tokenizer checkpoint catalog version '" + catalog.version() + "' disagrees with header '" +
                          ckpt.catalog_version + "'");
  }
  Tokenizer model(ckpt.config, std::move(catalog), 0);
  io::restore_params(ckpt, model.params());
  return model;
}

void save_tokenizer(const std::filesystem::path& path, const Tokenizer& model, std::uint64_t step,
                    const nlohmann::json& metrics, const nn::AdamState* optimizer) {
  io::save_checkpoint(path, tokenizer_checkpoint(model, step, metrics, optimizer));
}

Tokenizer load_tokenizer(const std::filesystem::path& path, const std::optional<Config>& runtime) {
  const io::Checkpoint c = io::load_checkpoint(path);
  io::require_component(c, "tokenizer", path);
  return tokenizer_from_checkpoint(c, runtime);
}

}  // namespace pgr2m::tok
