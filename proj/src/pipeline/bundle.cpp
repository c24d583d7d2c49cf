#include "pgr2m/pipeline/bundle.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "pgr2m/error.hpp"
#include "pgr2m/predictors/text.hpp"
#include "pgr2m/tokenizer/features.hpp"
#include "pgr2m/tokenizer/persist.hpp"

namespace pgr2m {

namespace {

template <class Model>
io::Checkpoint predictor_checkpoint(const char* component, const Model& model, const pose::Catalog& catalog,
                                    std::uint64_t step, const nlohmann::json& metrics, const nn::AdamState* optimizer) {
  io::Checkpoint c;
  c.component = component;
  c.config = model.config();
  c.catalog_version = catalog.version();
  c.catalog = catalog.to_json();
  c.step = step;
  if (!metrics.is_null()) c.metrics = metrics;
  io::store_params(c, model.params(), optimizer);
  return c;
}

template <class Model>
Model predictor_from_checkpoint(const char* component, const io::Checkpoint& ckpt,
                                const std::optional<Config>& runtime) {
  if (ckpt.component != component) {
    throw ValidationError(std::string("expected a ") + component + " checkpoint, got '" + ckpt.component + "'");
  }
  if (runtime) require_structural_match(ckpt.config, *runtime, std::string(component) + " checkpoint");
  const pose::Catalog catalog = pose::Catalog::from_json(ckpt.catalog);
  Model model(ckpt.config, catalog.size(), 0);
  io::restore_params(ckpt, model.params());
  return model;
}

std::string file_hash(const std::filesystem::path& p, std::uint64_t h) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::to_string(pred::fnv1a(std::to_string(h) + ss.str()));
}

}  // namespace

void save_base(const std::filesystem::path& path, const pred::BaseTransformer& model, const pose::Catalog& catalog,
               std::uint64_t step, const nlohmann::json& metrics, const nn::AdamState* optimizer) {
  io::save_checkpoint(path, predictor_checkpoint("base", model, catalog, step, metrics, optimizer));
}

void save_refine(const std::filesystem::path& path, const pred::RefineTransformer& model, const pose::Catalog& catalog,
                 std::uint64_t step, const nlohmann::json& metrics, const nn::AdamState* optimizer) {
  io::save_checkpoint(path, predictor_checkpoint("refine", model, catalog, step, metrics, optimizer));
}

pred::BaseTransformer base_from_checkpoint(const io::Checkpoint& ckpt, const std::optional<Config>& runtime) {
  return predictor_from_checkpoint<pred::BaseTransformer>("base", ckpt, runtime);
}

pred::RefineTransformer refine_from_checkpoint(const io::Checkpoint& ckpt, const std::optional<Config>& runtime) {
  return predictor_from_checkpoint<pred::RefineTransformer>("refine", ckpt, runtime);
}

std::filesystem::path bundle_file(const std::filesystem::path& dir, std::string_view component) {
  return dir / (std::string(component) + ".ckpt");
}

Bundle load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("bundle directory " + dir.string() + " does not exist");
  const io::Checkpoint t = io::load_checkpoint(bundle_file(dir, "tokenizer"));
  const io::Checkpoint b = io::load_checkpoint(bundle_file(dir, "base"));
  const io::Checkpoint r = io::load_checkpoint(bundle_file(dir, "refine"));
  io::require_component(t, "tokenizer", bundle_file(dir, "tokenizer"));
  io::require_component(b, "base", bundle_file(dir, "base"));
  io::require_component(r, "refine", bundle_file(dir, "refine"));
  for (const auto* c : {&b, &r}) {
    if (c->catalog_version != t.catalog_version || c->catalog != t.catalog) {
      throw ValidationError(c->component + " checkpoint was trained with a different pose-code catalog");
    }
  }
  std::string id;
  std::uint64_t h = 0;
  for (const char* c : {"tokenizer", "base", "refine"}) h = std::stoull(file_hash(bundle_file(dir, c), h));
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return Bundle{tok::tokenizer_from_checkpoint(t), base_from_checkpoint(b, t.config), refine_from_checkpoint(r, t.config),
                hex.str()};
}

void save_bundle(const std::filesystem::path& dir, const Bundle& bundle) {
  std::filesystem::create_directories(dir);
  tok::save_tokenizer(bundle_file(dir, "tokenizer"), bundle.tokenizer, 0);
  save_base(bundle_file(dir, "base"), bundle.base, bundle.catalog(), 0);
  save_refine(bundle_file(dir, "refine"), bundle.refine, bundle.catalog(), 0);
}

motion::Motion decode_motion(const tok::Tokenizer& tokenizer, const pose::PoseCodeSequence& pose,
                             const pred::ResidualCodes& residual, double origin_x, double origin_z) {
  return tok::restore_origin(tok::decode_tokens(tokenizer, pose, residual), origin_x, origin_z);
}

Generation generate(const Bundle& bundle, const std::string& caption, const std::vector<std::string>& keywords,
                    const pred::SampleOptions& options, std::uint64_t seed) {
  const pred::TextInput text = pred::text_input(caption, keywords, bundle.config().text_slots);
  nn::Rng rng(nn::derive_seed(seed, 0x6e7));
  Generation g;
  g.pose = pred::sample_pose_codes(bundle.base, bundle.catalog(), text, options, rng);
  if (g.pose.steps == 0) throw EmptyGenerationError("END was predicted at the first step for '" + caption + "'");
  g.residual = pred::sample_residual_codes(bundle.refine, text, g.pose, options, rng);
  g.motion = decode_motion(bundle.tokenizer, g.pose, g.residual);
  g.motion.caption = caption;
  g.motion.keywords = keywords;
  return g;
}

}  // namespace pgr2m
