#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pgr2m/error.hpp"
#include "pgr2m/motion/corpus.hpp"
#include "pgr2m/numerics/ops.hpp"
#include "pgr2m/tokenizer/features.hpp"
#include "pgr2m/tokenizer/tokenizer.hpp"

using namespace pgr2m;
using namespace pgr2m::tok;

namespace {

Config small_config() {
  Config c;
  c.latent_dim = 32;
  c.enc_width = 32;
  c.key_dim = 16;
  c.residual_codes = 16;
  c.stages = 3;
  return c;
}

Tensor identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1;
  return t;
}

Tensor clip_features(const motion::Motion& m) {
  return canonicalize(m).features.reshaped({1, m.length(), motion::kFeatureDim});
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(double(a[i]) - double(b[i])));
  return d;
}

}  // namespace

TEST_CASE("canonical features invert through root integration") {
  const motion::Motion m = motion::generate_family_motion("walk-turn-left", 3);
  const CanonicalMotion c = canonicalize(m);
  nn::Tape t(false);
  Var pos = integrate_root(t.constant(c.features.reshaped({1, m.length(), motion::kFeatureDim})));
  CHECK(max_abs_diff(pos.value(), c.positions) < 1e-4);
  const motion::Motion back = restore_origin(c.positions, c.origin_x, c.origin_z);
  for (std::size_t i = 0; i < m.frames.size(); ++i) CHECK(std::abs(back.frames[i] - m.frames[i]) < 1e-5);
  CHECK(c.positions[0] == 0.0);
  CHECK(c.positions[2] == 0.0);
}

TEST_CASE("decoded frames are kept above the floor") {
  Tensor pos({2, motion::kFeatureDim});
  for (std::size_t j = 0; j < motion::kJoints; ++j) {
    pos[3 * j + 1] = nn::Scalar(0.5 + 0.1 * double(j));
    pos[motion::kFeatureDim + 3 * j + 1] = nn::Scalar(-0.2 + 0.1 * double(j));
  }
  const motion::Motion m = restore_origin(pos, 1.0, 2.0);
  CHECK_NOTHROW(motion::validate(m));
  CHECK(m.joint(0, motion::kRoot).y() == doctest::Approx(0.5));
  CHECK(m.joint(1, motion::kRoot).y() == doctest::Approx(0.0));
  CHECK(m.joint(1, motion::kHead).y() == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(m.joint(1, motion::kHead).x() == doctest::Approx(1.0));
}

TEST_CASE("encoder and decoder shapes") {
  const motion::Motion m = motion::slice_frames(motion::generate_family_motion("squat", 1), 0, 64);
  SUBCASE("desk profile: 64 frames -> 16 x 128 -> 64 x 48") {
    Tokenizer model(Config{}, pose::default_catalog(), 7);
    nn::Tape t(false);
    Var h = model.encode(t, t.constant(clip_features(m)));
    CHECK(h.shape() == nn::Shape{1, 16, 128});
    CHECK(h.value().all_finite());
    Var out = model.decode(t, h);
    CHECK(out.shape() == nn::Shape{1, 64, 48});
  }
  SUBCASE("large-profile latent width: 16 x 512") {
    Config c = small_config();
    c.latent_dim = 512;
    Tokenizer model(c, pose::default_catalog(), 7);
    nn::Tape t(false);
    Var h = model.encode(t, t.constant(clip_features(m)));
    CHECK(h.shape() == nn::Shape{1, 16, 512});
    CHECK(model.decode(t, h).shape() == nn::Shape{1, 64, 48});
  }
  SUBCASE("indivisible length is a configuration error") {
    Tokenizer model(small_config(), pose::default_catalog(), 7);
    nn::Tape t(false);
    CHECK_THROWS_AS(model.encode(t, t.constant(Tensor({1, 62, 48}))), ConfigError);
  }
}

TEST_CASE("encode and decode are deterministic and finite") {
  Tokenizer model(small_config(), pose::default_catalog(), 3);
  const motion::Motion m = motion::generate_motion(4, 2);
  nn::Tape t1(false), t2(false);
  const Tensor a = model.encode(t1, t1.constant(clip_features(m))).value();
  const Tensor b = model.encode(t2, t2.constant(clip_features(m))).value();
  CHECK(a.values().size() == b.values().size());
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  CHECK(a.all_finite());

  nn::Rng rng(9);
  const Tensor F = nn::rand_uniform({2, 16, 32}, rng, -3, 3);
  nn::Tape t3(false), t4(false);
  const Tensor d1 = model.decode(t3, t3.constant(F)).value();
  const Tensor d2 = model.decode(t4, t4.constant(F)).value();
  CHECK(d1.shape() == nn::Shape{2, 64, 48});
  CHECK(std::equal(d1.values().begin(), d1.values().end(), d2.values().begin()));
  CHECK(d1.all_finite());
}

TEST_CASE("attention quantizer selection") {
  Config c = small_config();
  c.key_dim = c.latent_dim;
  Tokenizer model(c, pose::default_catalog(), 5);
  const std::size_t D = c.latent_dim, Nr = c.residual_codes;
  model.params().find("stage0.wq")->value = identity(D);
  model.params().find("stage0.wk")->value = identity(D);
  nn::Rng rng(11);
  Tensor& R = model.params().find("stage0.codebook")->value;
  for (std::size_t k = 0; k < D; ++k) R.at(3, k) = 1;
  Tensor r = nn::randn({20, D}, rng, 0.1);
  for (auto& v : r.values()) v += 1;

  SUBCASE("one dominant aligned key wins every frame") {
    nn::Tape t(false);
    StageOutput so = model.quantize_stage(t, t.constant(r), 0);
    const Tensor V = model.values(t, 0).value();
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(so.indices[i] == 3);
      for (std::size_t k = 0; k < D; ++k) CHECK(so.rhat.value().at(i, k) == V.at(3, k));
    }
  }
  SUBCASE("every quantized row is exactly one row of V") {
    const Tensor q = nn::randn({30, D}, rng);
    nn::Tape t(false);
    StageOutput so = model.quantize_stage(t, t.constant(q), 1);
    const Tensor V = model.values(t, 1).value();
    for (std::size_t i = 0; i < 30; ++i) {
      std::size_t matches = 0;
      for (std::size_t n = 0; n < Nr; ++n) {
        bool same = true;
        for (std::size_t k = 0; k < D; ++k) same = same && so.rhat.value().at(i, k) == V.at(n, k);
        matches += same;
      }
      CHECK(matches >= 1);
      for (std::size_t k = 0; k < D; ++k) CHECK(so.rhat.value().at(i, k) == V.at(so.indices[i], k));
    }
  }
  SUBCASE("sharper logits pull the soft residual onto the hard one") {
    const Tensor q = nn::randn({30, D}, rng);
    auto gap = [&]() {
      nn::Tape t(false);
      StageOutput so = model.quantize_stage(t, t.constant(q), 2);
      double d = 0;
      for (std::size_t i = 0; i < so.rhat.numel(); ++i) d += std::pow(so.rhat.value()[i] - so.rsoft.value()[i], 2);
      return std::sqrt(d);
    };
    const double base = gap();
    for (const char* g : {"stage2.gq", "stage2.gk"}) {
      for (auto& v : model.params().find(g)->value.values()) v *= 100;
    }
    const double sharp = gap();
    CHECK(sharp < 0.05 * base);
    CHECK(sharp < 1e-2);
  }
}

TEST_CASE("distance quantizer equals brute-force nearest neighbour") {
  Config c = small_config();
  c.quantizer = "distance";
  Tokenizer model(c, pose::default_catalog(), 6);
  nn::Rng rng(1);
  const Tensor r = nn::randn({40, c.latent_dim}, rng);
  nn::Tape t(false);
  StageOutput so = model.quantize_stage(t, t.constant(r), 0);
  const Tensor V = model.values(t, 0).value();
  for (std::size_t i = 0; i < 40; ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t n = 0; n < c.residual_codes; ++n) {
      double d = 0;
      for (std::size_t k = 0; k < c.latent_dim; ++k) d += std::pow(double(r.at(i, k)) - V.at(n, k), 2);
      if (d < best_d) best_d = d, best = n;
    }
    CHECK(so.indices[i] == best);
  }
}

TEST_CASE("residual quantization") {
  Tokenizer model(small_config(), pose::default_catalog(), 8);
  const auto d = motion::generate_corpus(2, 12);
  std::vector<motion::Motion> clips;
  for (const auto& m : d.motions) clips.push_back(motion::slice_frames(m, 0, 64));
  const Batch b = make_batch(model.catalog(), clips, 4);

  SUBCASE("telescoping identity") {
    nn::Tape t(false);
    RvqOutput q = model.quantize(t, model.pose_latents(t, b.indicators), model.encode(t, t.constant(b.features)), std::nullopt);
    const Tensor& r1 = q.r.front().value();
    const Tensor& last = q.r.back().value();
    double err = 0;
    for (std::size_t i = 0; i < r1.numel(); ++i) {
      double s = last[i];
      for (const auto& st : q.stages) s += st.rhat.value()[i];
      err = std::max(err, std::abs(s - r1[i]));
    }
    CHECK(err <= 1e-5);
  }
  SUBCASE("dropout draw below tau leaves the pose latents") {
    nn::Tape t(false);
    Var zhat = model.pose_latents(t, b.indicators);
    RvqOutput q = model.quantize(t, zhat, model.encode(t, t.constant(b.features)), 0.05);
    CHECK_FALSE(q.residuals_used);
    CHECK(std::equal(q.F.value().values().begin(), q.F.value().values().end(), zhat.value().values().begin()));
    const Tensor dropped = model.decode(t, q.F).value();
    const Tensor pose_only = model.decode(t, zhat).value();
    CHECK(std::equal(dropped.values().begin(), dropped.values().end(), pose_only.values().begin()));
    RvqOutput kept = model.quantize(t, zhat, model.encode(t, t.constant(b.features)), 0.1);
    CHECK(kept.residuals_used);
  }
  SUBCASE("permuting a codebook permutes indices and keeps residuals") {
    nn::Tape t(false);
    Var zhat = model.pose_latents(t, b.indicators);
    Var h = model.encode(t, t.constant(b.features));
    RvqOutput q = model.quantize(t, zhat, h, std::nullopt);
    Tensor& R = model.params().find("stage0.codebook")->value;
    const Tensor original = R;
    std::vector<std::size_t> perm(R.dim(0));
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    for (std::size_t n = 0; n < perm.size(); ++n)
      for (std::size_t k = 0; k < R.dim(1); ++k) R.at(perm[n], k) = original.at(n, k);
    nn::Tape t2(false);
    StageOutput so = model.quantize_stage(t2, t2.constant(q.r[0].value()), 0);
    for (std::size_t i = 0; i < so.indices.size(); ++i) CHECK(so.indices[i] == perm[q.stages[0].indices[i]]);
    CHECK(max_abs_diff(so.rhat.value(), q.stages[0].rhat.value()) <= 1e-5);
    R = original;
  }
  SUBCASE("fuse reproduces the inference latent bit for bit") {
    nn::Tape t(false);
    Var zhat = model.pose_latents(t, b.indicators);
    RvqOutput q = model.quantize(t, zhat, model.encode(t, t.constant(b.features)), std::nullopt);
    std::vector<std::vector<std::size_t>> idx;
    for (const auto& s : q.stages) idx.push_back(s.indices);
    Var F = model.fuse(t, zhat, idx);
    CHECK(std::equal(F.value().values().begin(), F.value().values().end(), q.F.value().values().begin()));
  }
}

TEST_CASE("loss_motion") {
  nn::Rng rng(3);
  const Tensor m = nn::randn({2, 8, 48}, rng);
  nn::Tape t;
  Var same = t.constant(m);
  CHECK(loss_motion(same, m).value()[0] == 0.0);
  Tensor shifted = m;
  for (auto& v : shifted.values()) v += 1;
  Var pred = t.constant(shifted);
  CHECK(loss_motion(pred, m).value()[0] == doctest::Approx(1.0).epsilon(1e-6));

  nn::Parameter p("prediction", nn::randn({2, 8, 48}, rng));
  nn::Tape t2;
  Var loss = loss_motion(t2.param(p), m);
  t2.backward(loss);
  for (std::size_t i = 0; i < m.numel(); ++i) {
    const double sign = p.value[i] > m[i] ? 1.0 : -1.0;
    CHECK(p.grad[i] == doctest::Approx(sign / double(m.numel())));
  }
}

TEST_CASE("loss_rvq vanishes when quantization is exact") {
  nn::Rng rng(4);
  const Tensor r = nn::randn({6, 5}, rng);
  nn::Tape t;
  RvqOutput q;
  q.r = {t.constant(r), t.constant(Tensor({6, 5}))};
  StageOutput so;
  so.rhat = t.constant(r);
  so.rsoft = t.constant(r);
  q.stages.push_back(so);
  CHECK(loss_rvq(q, 0.25).value()[0] == 0.0);
  Tensor off = r;
  off[0] += 2;
  q.stages[0].rhat = t.constant(off);
  // (1 + 0.25) * 4 / 30 from one entry off by 2.
  CHECK(loss_rvq(q, 0.25).value()[0] == doctest::Approx(1.25 * 4.0 / 30.0));
}

TEST_CASE("stop-gradient routing of the quantization loss") {
  Tokenizer model(small_config(), pose::default_catalog(), 12);
  const auto d = motion::generate_corpus(6, 4);
  std::vector<motion::Motion> clips;
  for (const auto& m : d.motions) clips.push_back(motion::slice_frames(m, 0, 64));
  const Batch b = make_batch(model.catalog(), clips, 4);
  auto grads_after = [&](auto pick) {
    for (auto* p : model.params().all()) p->zero_grad();
    nn::Tape t;
    RvqOutput q = model.quantize(t, model.pose_latents(t, b.indicators), model.encode(t, t.constant(b.features)), std::nullopt);
    t.backward(pick(rvq_stage_terms(q, 0, 0.25)));
  };
  auto norm = [&](const std::string& name) {
    double s = 0;
    for (auto v : model.params().find(name)->grad.values()) s += double(v) * v;
    return std::sqrt(s);
  };
  grads_after([](const RvqTerms& x) { return x.commit; });
  CHECK(norm("stage0.codebook") == 0.0);
  CHECK(norm("stage0.wv") == 0.0);
  CHECK(norm("enc.out.weight") > 0.0);
  CHECK(norm("pose_codebook") == 0.0);
  grads_after([](const RvqTerms& x) { return x.codebook; });
  CHECK(norm("enc.out.weight") == 0.0);
  CHECK(norm("enc.in.weight") == 0.0);
  CHECK(norm("stage0.codebook") > 0.0);
  CHECK(norm("stage0.wv") > 0.0);
  grads_after([](const RvqTerms& x) { return x.soft; });
  CHECK(norm("enc.out.weight") > 0.0);
  CHECK(norm("stage0.codebook") > 0.0);
  CHECK(norm("stage0.wq") > 0.0);
}

TEST_CASE("decoder gradient reaches the encoder and the pose codebook, not the residual codebooks") {
  Tokenizer model(small_config(), pose::default_catalog(), 13);
  const auto d = motion::generate_corpus(6, 4);
  std::vector<motion::Motion> clips;
  for (const auto& m : d.motions) clips.push_back(motion::slice_frames(m, 0, 64));
  const Batch b = make_batch(model.catalog(), clips, 4);
  nn::Tape t;
  RvqOutput q = model.quantize(t, model.pose_latents(t, b.indicators), model.encode(t, t.constant(b.features)), 0.5);
  t.backward(loss_motion(model.decode(t, q.F), b.positions));
  auto nonzero = [&](const std::string& name) {
    for (auto v : model.params().find(name)->grad.values())
      if (v != 0) return true;
    return false;
  };
  CHECK(nonzero("enc.in.weight"));
  CHECK(nonzero("pose_codebook"));
  CHECK(nonzero("dec.out.weight"));
  CHECK_FALSE(nonzero("stage0.codebook"));
  CHECK_FALSE(nonzero("stage1.wq"));
}

TEST_CASE("loss_entropy") {
  const double gamma = 0.01;
  nn::Tape t;
  SUBCASE("every sample on the same code") {
    Tensor p({8, 4});
    for (std::size_t i = 0; i < 8; ++i) p.at(i, 2) = 1;
    CHECK(std::abs(loss_entropy({t.constant(p)}, gamma).value()[0]) < 1e-9);
  }
  SUBCASE("deterministic samples spread uniformly over k codes") {
    const std::size_t k = 4;
    Tensor p({8, 6});
    for (std::size_t i = 0; i < 8; ++i) p.at(i, i % k) = 1;
    CHECK(loss_entropy({t.constant(p)}, gamma).value()[0] == doctest::Approx(-gamma * std::log(double(k))).epsilon(1e-6));
  }
  SUBCASE("uniform rows") {
    Tensor p({5, 16}, nn::Scalar(1.0 / 16));
    CHECK(std::abs(loss_entropy({t.constant(p), t.constant(p)}, gamma).value()[0]) < 1e-8);
  }
}

TEST_CASE("perplexity identities") {
  CHECK(perplexity(std::vector<double>(512, 1.0 / 512)) == 512.0);
  std::vector<double> collapsed(512, 0.0);
  collapsed[17] = 1.0;
  CHECK(perplexity(collapsed) == 1.0);
  CHECK(perplexity(std::vector<double>{0.5, 0.5}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(perplexity(std::vector<std::vector<double>>{std::vector<double>(128, 1.0 / 128), collapsed}) ==
        doctest::Approx((128.0 + 1.0) / 2));
  const auto u = usage_histogram({0, 1, 1, 3}, 4);
  CHECK(u == std::vector<double>{0.25, 0.5, 0.0, 0.25});
}

TEST_CASE("tokenize and decode round trip through indices") {
  Tokenizer model(small_config(), pose::default_catalog(), 14);
  const motion::Motion m = motion::generate_motion(1, 5);
  const Tokens tk = tokenize(model, m);
  CHECK(tk.pose.steps == m.length() / 4);
  CHECK(tk.residual.size() == 3);
  const motion::Motion a = reconstruct(model, tk);
  const motion::Motion b = reconstruct(model, tk);
  CHECK(a.frames == b.frames);
  CHECK(a.length() == m.length());
  const Tensor pose_only = decode_tokens(model, tk.pose, {});
  CHECK(pose_only.shape() == nn::Shape{m.length(), 48});
}

TEST_CASE("joint space counts a rigid translation only at the root") {
  nn::Rng rng(4);
  const Tensor m = nn::randn({2, 8, 48}, rng);
  Tensor shifted = m;
  for (std::size_t k = 0; k < shifted.numel(); ++k) shifted[k] += k % 3 == 1 ? -0.5f : 2.0f;
  const Tensor a = joint_space(m), b = joint_space(shifted);
  for (std::size_t k = 0; k < a.numel(); ++k) {
    const double expect = k % 48 < 3 ? (k % 3 == 1 ? -0.5 : 2.0) : 0.0;
    CHECK(double(b[k] - a[k]) == doctest::Approx(expect).epsilon(1e-5));
  }
  CHECK_THROWS_AS(joint_space(Tensor({2, 47})), DimensionError);
}
