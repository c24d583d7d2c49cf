#include "pgr2m/tokenizer/train.hpp"

#include <chrono>
#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"
#include "pgr2m/numerics/parallel.hpp"
#include "pgr2m/tokenizer/features.hpp"

namespace pgr2m::tok {

using motion::kFeatureDim;

namespace {

struct MotionEval {
  double abs_full = 0.0, abs_pose = 0.0;
  std::size_t entries = 0, rows = 0;
  std::vector<std::vector<std::size_t>> indices;
  std::vector<double> residual_norm_sums;
};

double abs_sum(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(double(a[i]) - double(b[i]));
  return s;
}

MotionEval evaluate_one(const Tokenizer& model, const motion::Motion& m) {
  MotionEval e;
  const CanonicalMotion c = canonicalize(m);
  const auto z = pose::parse_motion(model.catalog(), m, model.config().stride);
  Tape t(false);
  Var h = model.encode(t, t.constant(c.features.reshaped({1, m.length(), kFeatureDim})));
  Var zhat = model.pose_latents(t, z.to_tensor().reshaped({1, z.steps, z.codes}));
  RvqOutput q = model.quantize(t, zhat, h, std::nullopt);
  const Tensor target = joint_space(c.positions.reshaped({1, m.length(), kFeatureDim}));
  e.abs_full = abs_sum(joint_space(model.decode(t, q.F).value()), target);
  e.abs_pose = abs_sum(joint_space(model.decode(t, zhat).value()), target);
  e.entries = target.numel();
  e.rows = z.steps;
  for (auto& s : q.stages) e.indices.push_back(s.indices);
  for (const Var& r : q.r) {
    const Tensor& v = r.value();
    const std::size_t D = v.shape().back();
    double total = 0.0;
    for (std::size_t i = 0; i < v.numel() / D; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < D; ++k) sq += double(v[i * D + k]) * v[i * D + k];
      total += std::sqrt(sq);
    }
    e.residual_norm_sums.push_back(total);
  }
  return e;
}

}  // namespace

TokenizerEval evaluate_tokenizer(const Tokenizer& model, const std::vector<const motion::Motion*>& motions) {
  if (motions.empty()) throw ValidationError("evaluation set is empty");
  std::vector<MotionEval> parts(motions.size());
  nn::parallel_for(motions.size(), [&](std::size_t i) { parts[i] = evaluate_one(model, *motions[i]); });
  TokenizerEval out;
  out.motions = motions.size();
  const std::size_t S = model.stages();
  std::vector<std::vector<std::size_t>> all(S);
  double full = 0.0, pose_only = 0.0;
  std::size_t entries = 0, rows = 0;
  out.residual_norms.assign(S + 1, 0.0);
  for (const auto& p : parts) {
    full += p.abs_full;
    pose_only += p.abs_pose;
    entries += p.entries;
    rows += p.rows;
    for (std::size_t s = 0; s < S; ++s) all[s].insert(all[s].end(), p.indices[s].begin(), p.indices[s].end());
    for (std::size_t s = 0; s <= S; ++s) out.residual_norms[s] += p.residual_norm_sums[s];
  }
  out.l1_full = full / double(entries);
  out.l1_pose_only = pose_only / double(entries);
  for (auto& v : out.residual_norms) v /= double(rows);
  std::vector<std::vector<double>> usage;
  for (std::size_t s = 0; s < S; ++s) {
    usage.push_back(usage_histogram(all[s], model.config().residual_codes));
    out.stage_perplexity.push_back(perplexity(usage.back()));
  }
  out.perplexity = perplexity(usage);
  out.orthogonality = pose::orthogonality(model.pose_codebook().value);
  return out;
}

nlohmann::json to_json(const TokenizerEval& e) {
  return {{"l1_full", e.l1_full},
          {"l1_pose_only", e.l1_pose_only},
          {"perplexity", e.perplexity},
          {"stage_perplexity", e.stage_perplexity},
          {"orthogonality", e.orthogonality},
          {"residual_norms", e.residual_norms},
          {"motions", e.motions}};
}

TrainResult train_tokenizer(Tokenizer& model, const std::vector<const motion::Motion*>& train,
                            const std::vector<const motion::Motion*>& val, const TrainOptions& options) {
  if (train.empty()) throw ValidationError("training split is empty");
  const Config& cfg = model.config();
  const std::size_t total_steps = options.steps ? options.steps : cfg.tokenizer_steps;
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.warmup_steps = static_cast<std::int64_t>(cfg.warmup);
  nn::Adam opt(model.params().all(), ac);
  if (options.resume) opt.load_state(*options.resume);
  nn::Rng rng(nn::derive_seed(cfg.seed, 0x70c));
  // Skip the draws of steps already taken so a resumed run continues the same stream.
  const auto start = static_cast<std::size_t>(opt.state().step);

  std::vector<const motion::Motion*> usable;
  for (const auto* m : train) {
    if (m->length() >= cfg.window) usable.push_back(m);
  }
  if (usable.empty()) throw ValidationError("no training motion is at least " + std::to_string(cfg.window) + " frames");

  TrainResult result;
  result.best_val_l1 = INFINITY;
  std::vector<Tensor> best;
  double run_motion = 0.0, run_rvq = 0.0, run_ent = 0.0, run_total = 0.0;
  std::size_t run_n = 0;
  const auto t0 = std::chrono::steady_clock::now();

  auto evaluate_and_log = [&](std::size_t step) {
    nlohmann::json rec = {{"step", step}, {"lr", nn::warmup_lr(cfg.lr, static_cast<std::int64_t>(step), ac.warmup_steps)}};
    if (run_n) {
      rec["loss"] = run_total / double(run_n);
      rec["loss_motion"] = run_motion / double(run_n);
      rec["loss_rvq"] = run_rvq / double(run_n);
      rec["loss_ent"] = run_ent / double(run_n);
    }
    const auto& eval_set = val.empty() ? train : val;
    const TokenizerEval e = evaluate_tokenizer(model, eval_set);
    rec["val_loss_motion"] = e.l1_full;
    rec["val_loss_motion_pose_only"] = e.l1_pose_only;
    rec["perplexity"] = e.perplexity;
    rec["stage_perplexity"] = e.stage_perplexity;
    rec["orthogonality"] = e.orthogonality;
    rec["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.l1_full < result.best_val_l1) {
      result.best_val_l1 = e.l1_full;
      result.best_step = step;
      if (options.keep_best) best = model.params().snapshot();
    }
    rec["best_val_loss_motion"] = result.best_val_l1;
    result.log.push_back(rec);
    if (options.on_log) options.on_log(rec);
    run_motion = run_rvq = run_ent = run_total = 0.0;
    run_n = 0;
  };

  for (std::size_t step = 0; step < start; ++step) {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      (void)nn::uniform01(rng);
      (void)nn::uniform01(rng);
    }
    (void)nn::uniform01(rng);
  }

  for (std::size_t step = start; step < total_steps; ++step) {
    std::vector<motion::Motion> clips;
    clips.reserve(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto pick = std::min(usable.size() - 1, static_cast<std::size_t>(nn::uniform01(rng) * usable.size()));
      clips.push_back(motion::augment_crop(*usable[pick], cfg.window, rng));
    }
    const double draw = nn::uniform01(rng);
    const Batch batch = make_batch(model.catalog(), clips, cfg.stride);

    Tape t;
    Var h = model.encode(t, t.constant(batch.features));
    Var zhat = model.pose_latents(t, batch.indicators);
    RvqOutput q = model.quantize(t, zhat, h, draw);
    Var recon = model.decode(t, q.F);
    TokenizerLoss loss = tokenizer_loss(model, q, recon, batch.positions);
    const double total = loss.total.value()[0];
    if (!std::isfinite(total)) {
      throw NumericError("tokenizer training diverged at step " + std::to_string(step + 1) +
                         ": loss_motion=" + std::to_string(loss.motion.value()[0]) +
                         " loss_rvq=" + std::to_string(loss.rvq.value()[0]) +
                         " loss_ent=" + std::to_string(loss.entropy.value()[0]));
    }
    opt.zero_grad();
    t.backward(loss.total);
    if (cfg.grad_clip > 0) nn::clip_grad_norm(opt.params(), cfg.grad_clip);
    opt.step();

    run_total += total;
    run_motion += loss.motion.value()[0];
    run_rvq += loss.rvq.value()[0];
    run_ent += loss.entropy.value()[0];
    ++run_n;
    if ((step + 1) % cfg.eval_every == 0 || step + 1 == total_steps) evaluate_and_log(step + 1);
  }
  if (start >= total_steps) evaluate_and_log(start);
  if (options.keep_best && !best.empty()) model.params().restore(best);
  result.final_step = std::max(start, total_steps);
  result.optimizer = opt.state();
  return result;
}

}  // namespace pgr2m::tok
