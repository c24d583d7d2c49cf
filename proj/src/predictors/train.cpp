#include "pgr2m/predictors/train.hpp"

#include <chrono>
#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/parallel.hpp"

namespace pgr2m::pred {

namespace {

template <class T>
std::vector<const T*> pointers(const std::vector<std::size_t>& picks, const std::vector<Example>& ex, T Example::*f) {
  std::vector<const T*> out;
  for (auto i : picks) out.push_back(&(ex[i].*f));
  return out;
}

std::vector<TextInput> texts_of(const std::vector<std::size_t>& picks, const std::vector<Example>& ex) {
  std::vector<TextInput> out;
  for (auto i : picks) out.push_back(ex[i].text);
  return out;
}

// Consecutive index chunks of at most `size`.
std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t a = 0; a < n; a += size) {
    out.emplace_back();
    for (std::size_t i = a; i < std::min(n, a + size); ++i) out.back().push_back(i);
  }
  return out;
}

// Shared optimizer loop; `step_loss` builds the loss on a fresh tape and `evaluate`
// returns the validation loss plus extra log fields.
PredictorTrainResult run_training(nn::ParamStore& params, const Config& cfg, std::size_t total_steps,
                                  std::uint64_t stream, const std::string& what, const PredictorTrainOptions& options,
                                  const std::function<Var(Tape&, nn::Rng&)>& step_loss,
                                  const std::function<double(nlohmann::json&)>& evaluate) {
  nn::AdamConfig ac;
  ac.lr = cfg.predictor_lr;
  ac.warmup_steps = static_cast<std::int64_t>(cfg.predictor_warmup);
  nn::Adam opt(params.all(), ac);
  if (options.resume) opt.load_state(*options.resume);
  const auto start = static_cast<std::size_t>(opt.state().step);
  PredictorTrainResult result;
  result.best_val_loss = INFINITY;
  std::vector<Tensor> best;
  double run_loss = 0.0;
  std::size_t run_n = 0;
  const auto t0 = std::chrono::steady_clock::now();

  auto log = [&](std::size_t step) {
    nlohmann::json rec = {{"step", step},
                          {"lr", nn::warmup_lr(cfg.predictor_lr, static_cast<std::int64_t>(step), ac.warmup_steps)}};
    if (run_n) rec["loss"] = run_loss / double(run_n);
    const double v = evaluate(rec);
    rec["val_loss"] = v;
    rec["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v < result.best_val_loss) {
      result.best_val_loss = v;
      result.best_step = step;
      if (options.keep_best) best = params.snapshot();
    }
    rec["best_val_loss"] = result.best_val_loss;
    result.log.push_back(rec);
    if (options.on_log) options.on_log(rec);
    run_loss = 0.0;
    run_n = 0;
  };

  for (std::size_t step = start; step < total_steps; ++step) {
    // One derived stream per step, so a resumed run continues the same draws.
    nn::Rng rng(nn::derive_seed(nn::derive_seed(cfg.seed, stream), step));
    Tape t;
    Var loss = step_loss(t, rng);
    const double l = loss.value()[0];
    if (!std::isfinite(l)) {
      throw NumericError(what + " training diverged at step " + std::to_string(step + 1) + ": loss=" + std::to_string(l));
    }
    opt.zero_grad();
    t.backward(loss);
    if (cfg.grad_clip > 0) nn::clip_grad_norm(opt.params(), cfg.grad_clip);
    opt.step();
    run_loss += l;
    ++run_n;
    if ((step + 1) % cfg.eval_every == 0 || step + 1 == total_steps) log(step + 1);
  }
  if (start >= total_steps) log(start);
  if (options.keep_best && !best.empty()) params.restore(best);
  result.final_step = std::max(start, total_steps);
  result.optimizer = opt.state();
  return result;
}

std::vector<std::size_t> draw_batch(std::size_t n, std::size_t batch, nn::Rng& rng) {
  std::vector<std::size_t> picks;
  for (std::size_t b = 0; b < batch; ++b) {
    picks.push_back(std::min(n - 1, static_cast<std::size_t>(nn::uniform01(rng) * double(n))));
  }
  return picks;
}

}  // namespace

std::vector<Example> make_examples(const tok::Tokenizer& tokenizer, const std::vector<const motion::Motion*>& motions,
                                   bool with_residuals) {
  std::vector<Example> out(motions.size());
  const Config& cfg = tokenizer.config();
  nn::parallel_for(motions.size(), [&](std::size_t i) {
    const motion::Motion& m = *motions[i];
    Example e;
    e.text = text_input(m.caption, m.keywords, cfg.text_slots);
    if (with_residuals) {
      tok::Tokens tk = tok::tokenize(tokenizer, m);
      e.pose = std::move(tk.pose);
      e.residual = std::move(tk.residual);
    } else {
      e.pose = pose::parse_motion(tokenizer.catalog(), m, cfg.stride);
    }
    if (e.pose.steps > cfg.max_steps) {
      throw ConfigError("motion of " + std::to_string(e.pose.steps) + " steps exceeds max_steps " +
                        std::to_string(cfg.max_steps));
    }
    out[i] = std::move(e);
  });
  return out;
}

double evaluate_base(const BaseTransformer& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("evaluation set is empty");
  const auto parts = chunks(examples.size(), model.config().predictor_batch);
  std::vector<double> sums(parts.size());
  nn::parallel_for(parts.size(), [&](std::size_t c) {
    const auto& picks = parts[c];
    Tape t(false);
    const auto seqs = pointers(picks, examples, &Example::pose);
    Var logits = model.forward(t, texts_of(picks, examples), seqs);
    // Batch mean times batch size gives the per-sample sum.
    sums[c] = base_loss(logits, base_targets(seqs, model.codes())).value()[0] * double(picks.size());
  });
  double total = 0.0;
  for (double s : sums) total += s;
  return total / double(examples.size());
}

RefineEval evaluate_refine(const RefineTransformer& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("evaluation set is empty");
  const std::size_t S = model.config().stages, Nr = model.config().residual_codes;
  const auto parts = chunks(examples.size(), model.config().predictor_batch);
  std::vector<std::vector<double>> ce(parts.size(), std::vector<double>(S)), hits(parts.size(), std::vector<double>(S));
  std::vector<std::size_t> frames(parts.size());
  nn::parallel_for(parts.size(), [&](std::size_t c) {
    const auto& picks = parts[c];
    const auto seqs = pointers(picks, examples, &Example::pose);
    const auto res = pointers(picks, examples, &Example::residual);
    const auto texts = texts_of(picks, examples);
    for (auto i : picks) frames[c] += examples[i].pose.steps;
    for (std::size_t s = 0; s < S; ++s) {
      Tape t(false);
      Var logits = model.forward(t, texts, seqs, res, s);
      ce[c][s] = refine_loss(logits, res, s).value()[0] * double(picks.size());
      const Tensor& v = logits.value();
      const std::size_t L = v.dim(1);
      for (std::size_t b = 0; b < picks.size(); ++b) {
        const auto& target = (*res[b])[s];
        for (std::size_t i = 0; i < target.size(); ++i) {
          const nn::Scalar* l = v.data() + (b * L + i) * Nr;
          hits[c][s] += static_cast<std::size_t>(std::max_element(l, l + Nr) - l) == target[i];
        }
      }
    }
  });
  RefineEval e;
  e.stage_ce.assign(S, 0.0);
  e.stage_accuracy.assign(S, 0.0);
  std::size_t total_frames = 0;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    total_frames += frames[c];
    for (std::size_t s = 0; s < S; ++s) {
      e.stage_ce[s] += ce[c][s];
      e.stage_accuracy[s] += hits[c][s];
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    e.stage_ce[s] /= double(examples.size());
    e.stage_accuracy[s] /= double(total_frames);
    e.mean_ce += e.stage_ce[s] / double(S);
  }
  return e;
}

PredictorTrainResult train_base(BaseTransformer& model, const std::vector<Example>& train,
                                const std::vector<Example>& val, const PredictorTrainOptions& options) {
  if (train.empty()) throw ValidationError("training split is empty");
  const Config& cfg = model.config();
  auto step_loss = [&](Tape& t, nn::Rng& rng) {
    const auto picks = draw_batch(train.size(), cfg.predictor_batch, rng);
    const auto seqs = pointers(picks, train, &Example::pose);
    return base_loss(model.forward(t, texts_of(picks, train), seqs), base_targets(seqs, model.codes()));
  };
  auto evaluate = [&](nlohmann::json&) { return evaluate_base(model, val.empty() ? train : val); };
  return run_training(model.params(), cfg, options.steps ? options.steps : cfg.base_steps, 0xba5e, "base", options,
                      step_loss, evaluate);
}

PredictorTrainResult train_refine(RefineTransformer& model, const std::vector<Example>& train,
                                  const std::vector<Example>& val, const PredictorTrainOptions& options) {
  if (train.empty()) throw ValidationError("training split is empty");
  const Config& cfg = model.config();
  for (const auto& e : train) {
    if (e.residual.size() != cfg.stages) throw ValidationError("refine training example lacks residual targets");
  }
  auto step_loss = [&](Tape& t, nn::Rng& rng) {
    const auto s = std::min(cfg.stages - 1, static_cast<std::size_t>(nn::uniform01(rng) * double(cfg.stages)));
    const auto picks = draw_batch(train.size(), cfg.predictor_batch, rng);
    const auto res = pointers(picks, train, &Example::residual);
    Var logits = model.forward(t, texts_of(picks, train), pointers(picks, train, &Example::pose), res, s);
    return refine_loss(logits, res, s);
  };
  auto evaluate = [&](nlohmann::json& rec) {
    const RefineEval e = evaluate_refine(model, val.empty() ? train : val);
    rec["val_stage_ce"] = e.stage_ce;
    rec["val_stage_accuracy"] = e.stage_accuracy;
    return e.mean_ce;
  };
  return run_training(model.params(), cfg, options.steps ? options.steps : cfg.refine_steps, 0x2ef1, "refine",
                      options, step_loss, evaluate);
}

}  // namespace pgr2m::pred
