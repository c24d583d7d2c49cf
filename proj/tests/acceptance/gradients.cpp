// Double-precision finite-difference checks of the three training losses on
// two-step (8-frame) fixtures. Prints one result line; exit status 0 on pass.
#include <chrono>
#include <cstdio>

#include "pgr2m/motion/corpus.hpp"
#include "pgr2m/numerics/gradcheck.hpp"
#include "pgr2m/predictors/models.hpp"
#include "pgr2m/tokenizer/tokenizer.hpp"

using namespace pgr2m;

namespace {

constexpr double kTolerance = 1e-3;
constexpr double kStep = 1e-5;

Config tiny_config() {
  Config c;
  c.latent_dim = 8;
  c.enc_width = 8;
  c.key_dim = 4;
  c.residual_codes = 6;
  c.stages = 2;
  c.layers = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.text_slots = 32;
  return c;
}

std::vector<motion::Motion> clips(std::uint64_t seed) {
  std::vector<motion::Motion> out;
  for (std::size_t i = 0; i < 2; ++i) out.push_back(motion::slice_frames(motion::generate_motion(seed, i), 8, 8));
  return out;
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const Config cfg = tiny_config();
  const pose::Catalog& cat = pose::default_catalog();
  double worst = 0.0;
  std::size_t coords = 0;
  std::string where;
  auto note = [&](const char* what, const nn::GradCheckReport& r) {
    std::fprintf(stderr, "%s: max rel error %.3g over %zu coordinates (worst %s)\n", what, r.max_rel_error,
                 r.coordinates, r.worst.c_str());
    coords += r.coordinates;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = std::string(what) + " " + r.worst;
    }
  };

  {
    tok::Tokenizer model(cfg, cat, 2);
    const tok::Batch b = tok::make_batch(cat, clips(21), cfg.stride);
    // One draw keeps the residual stages, one drops them.
    for (const double draw : {0.5, 0.05}) {
      auto loss = [&](nn::Tape& t) {
        nn::Var h = model.encode(t, t.constant(b.features));
        tok::RvqOutput q = model.quantize(t, model.pose_latents(t, b.indicators), h, draw);
        return tok::tokenizer_loss(model, q, model.decode(t, q.F), b.positions).total;
      };
      note(draw < cfg.tau ? "tokenizer loss (residuals dropped)" : "tokenizer loss",
           nn::grad_check_params(loss, model.params().all(), kStep));
    }
  }

  const auto m = clips(9);
  const pose::PoseCodeSequence za = pose::parse_motion(cat, m[0], cfg.stride), zb = pose::parse_motion(cat, m[1], cfg.stride);
  const std::vector<pred::TextInput> texts = {pred::text_input("a person walks forward", {"walk"}, cfg.text_slots),
                                              pred::text_input("a person bows", {"torso"}, cfg.text_slots)};
  {
    pred::BaseTransformer model(cfg, cat.size(), 1);
    auto loss = [&](nn::Tape& t) {
      return pred::base_loss(model.forward(t, texts, {&za, &zb}), pred::base_targets({&za, &zb}, cat.size()));
    };
    note("base loss", nn::grad_check_params(loss, model.params().all(), kStep));
  }
  {
    pred::RefineTransformer model(cfg, cat.size(), 2);
    const pred::ResidualCodes ra = {{1, 4}, {0, 5}}, rb = {{3, 3}, {2, 1}};
    for (std::size_t s = 0; s < cfg.stages; ++s) {
      auto loss = [&](nn::Tape& t) {
        return pred::refine_loss(model.forward(t, texts, {&za, &zb}, {&ra, &rb}, s), {&ra, &rb}, s);
      };
      note(s == 0 ? "refine loss stage 0" : "refine loss stage 1", nn::grad_check_params(loss, model.params().all(), kStep));
    }
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = worst < kTolerance && secs < 300.0;
  std::printf("%s | gradient suite | max rel error %.3g < %.0e over %zu coordinates (worst: %s); %.1f s < 300 s\n",
              pass ? "PASS" : "FAIL", worst, kTolerance, coords, where.c_str(), secs);
  return pass ? 0 : 1;
}
