#include "pgr2m/tokenizer/tokenizer.hpp"

#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"
#include "pgr2m/tokenizer/features.hpp"

namespace pgr2m::tok {

using motion::kFeatureDim;
using nn::Scalar;

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kLevels = 2;  // two stride-2 levels, total stride 4
const double kReluGain = std::sqrt(2.0);

}  // namespace

Tokenizer::Tokenizer(Config config, pose::Catalog catalog, std::uint64_t seed)
    : config_(std::move(config)), catalog_(std::move(catalog)) {
  config_.validate();
  nn::Rng rng(seed);
  const std::size_t N = catalog_.size(), Dc = config_.latent_dim, W = config_.enc_width, Dk = config_.key_dim;
  const std::size_t Nr = config_.residual_codes;
  pose_codebook_ = &params_.add("pose_codebook", nn::randn({N, Dc}, rng));

  enc_in_ = nn::Conv1d::make(params_, "enc.in", kFeatureDim, W, kKernel, 1, rng, kReluGain);
  for (std::size_t lv = 0; lv < kLevels; ++lv) {
    const std::string p = "enc.level" + std::to_string(lv);
    enc_down_.push_back(nn::Conv1d::make(params_, p + ".down", W, W, kKernel, 2, rng, kReluGain));
    enc_res_.emplace_back();
    for (std::size_t b = 0; b < config_.enc_blocks; ++b) {
      const std::string q = p + ".res" + std::to_string(b);
      enc_res_.back().push_back({nn::Conv1d::make(params_, q + ".a", W, W, kKernel, 1, rng, kReluGain),
                                 nn::Conv1d::make(params_, q + ".b", W, W, kKernel, 1, rng, 0.5)});
    }
  }
  enc_out_ = nn::Conv1d::make(params_, "enc.out", W, Dc, kKernel, 1, rng);

  dec_in_ = nn::Conv1d::make(params_, "dec.in", Dc, W, kKernel, 1, rng, kReluGain);
  for (std::size_t lv = 0; lv < kLevels; ++lv) {
    const std::string p = "dec.level" + std::to_string(lv);
    dec_res_.emplace_back();
    for (std::size_t b = 0; b < config_.enc_blocks; ++b) {
      const std::string q = p + ".res" + std::to_string(b);
      dec_res_.back().push_back({nn::Conv1d::make(params_, q + ".a", W, W, kKernel, 1, rng, kReluGain),
                                 nn::Conv1d::make(params_, q + ".b", W, W, kKernel, 1, rng, 0.5)});
    }
    dec_up_.push_back(nn::Conv1d::make(params_, p + ".up", W, W, kKernel, 1, rng, kReluGain));
  }
  dec_mid_ = nn::Conv1d::make(params_, "dec.mid", W, W, kKernel, 1, rng, kReluGain);
  dec_out_ = nn::Conv1d::make(params_, "dec.out", W, kFeatureDim, kKernel, 1, rng);

  for (std::size_t s = 0; s < config_.stages; ++s) {
    const std::string p = "stage" + std::to_string(s);
    Stage st;
    st.codebook = &params_.add(p + ".codebook", nn::randn({Nr, Dc}, rng));
    st.wq = &params_.add(p + ".wq", nn::fan_in_init({Dc, Dk}, Dc, rng));
    st.wk = &params_.add(p + ".wk", nn::fan_in_init({Dc, Dk}, Dc, rng));
    st.wv = &params_.add(p + ".wv", nn::fan_in_init({Dc, Dc}, Dc, rng));
    st.gq = &params_.add(p + ".gq", Tensor({Dk}, 1));
    st.gk = &params_.add(p + ".gk", Tensor({Dk}, 1));
    stages_.push_back(st);
  }
}

Var Tokenizer::res_block(Tape& t, const ResBlock& blk, Var x) const {
  return nn::add(x, blk.b(t, nn::relu(blk.a(t, nn::relu(x)))));
}

Var Tokenizer::encode(Tape& t, Var features) const {
  const nn::Shape& s = features.shape();
  if (s.size() != 3 || s[2] != kFeatureDim) throw DimensionError("encoder input must be [B, L, 48], got " + nn::shape_str(s));
  if (s[1] == 0 || s[1] % config_.stride != 0) {
    throw ConfigError("motion length " + std::to_string(s[1]) + " is not a multiple of the stride " +
                      std::to_string(config_.stride));
  }
  Var x = nn::relu(enc_in_(t, features));
  for (std::size_t lv = 0; lv < kLevels; ++lv) {
    x = enc_down_[lv](t, x);
    for (const auto& blk : enc_res_[lv]) x = res_block(t, blk, x);
  }
  return enc_out_(t, nn::relu(x));
}

Var Tokenizer::pose_latents(Tape& t, const Tensor& indicators) const {
  return pose::pose_latents(t.constant(indicators), nn::bind(t, *pose_codebook_));
}

Var Tokenizer::values(Tape& t, std::size_t s) const {
  const Stage& st = stages_.at(s);
  return nn::matmul(nn::bind(t, *st.codebook), nn::bind(t, *st.wv));
}

StageOutput Tokenizer::quantize_stage(Tape& t, Var r, std::size_t s) const {
  const Stage& st = stages_.at(s);
  Var V = values(t, s);
  Var logits;
  if (config_.quantizer == "attention") {
    Var q = nn::rmsnorm(nn::matmul(r, nn::bind(t, *st.wq)), nn::bind(t, *st.gq));
    Var k = nn::rmsnorm(nn::matmul(nn::bind(t, *st.codebook), nn::bind(t, *st.wk)), nn::bind(t, *st.gk));
    logits = nn::scale(nn::matmul(q, nn::transpose(k)), Scalar(1.0 / std::sqrt(double(config_.key_dim))));
  } else {
    // -|r - v|^2 up to the per-row constant |r|^2, which leaves argmax and softmax unchanged.
    Var cross = nn::scale(nn::matmul(r, nn::transpose(V)), Scalar(2));
    logits = nn::add_broadcast(cross, nn::scale(nn::row_sums(nn::square(V)), Scalar(-1)));
  }
  StageOutput out;
  out.indices = nn::argmax_rows(logits.value());
  out.soft = nn::softmax_rows(logits);
  std::vector<long> idx(out.indices.begin(), out.indices.end());
  out.rhat = nn::embedding(V, idx);
  out.rsoft = nn::matmul(out.soft, V);
  return out;
}

RvqOutput Tokenizer::quantize(Tape& t, Var zhat, Var h, std::optional<double> dropout_draw) const {
  if (zhat.shape() != h.shape()) {
    throw DimensionError("pose latents " + nn::shape_str(zhat.shape()) + " and encoder latents " +
                         nn::shape_str(h.shape()) + " differ");
  }
  const nn::Shape shape = h.shape();
  const std::size_t Dc = shape.back(), M = h.numel() / Dc;
  RvqOutput q;
  q.zhat = nn::reshape(zhat, {M, Dc});
  Var r = nn::sub(nn::reshape(h, {M, Dc}), nn::stop_gradient(q.zhat));
  q.r.push_back(r);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    StageOutput so = quantize_stage(t, r, s);
    r = nn::sub(r, nn::stop_gradient(so.rhat));
    q.r.push_back(r);
    q.stages.push_back(std::move(so));
  }
  const double tau = config_.residual_dropout ? config_.tau : 0.0;
  q.residuals_used = !dropout_draw || *dropout_draw >= tau;
  if (q.residuals_used && !q.stages.empty()) {
    Var total = q.stages[0].rhat;
    for (std::size_t s = 1; s < q.stages.size(); ++s) total = nn::add(total, q.stages[s].rhat);
    q.F = nn::reshape(nn::add(q.zhat, nn::straight_through(total, q.r[0])), shape);
  } else {
    q.F = nn::reshape(q.zhat, shape);
  }
  return q;
}

Var Tokenizer::decode(Tape& t, Var F) const {
  const nn::Shape& s = F.shape();
  if (s.size() != 3 || s[2] != config_.latent_dim) {
    throw DimensionError("decoder input must be [B, L_d, " + std::to_string(config_.latent_dim) + "], got " +
                         nn::shape_str(s));
  }
  Var x = nn::relu(dec_in_(t, F));
  for (std::size_t lv = 0; lv < kLevels; ++lv) {
    for (const auto& blk : dec_res_[lv]) x = res_block(t, blk, x);
    x = nn::relu(dec_up_[lv](t, nn::upsample_nearest(x, 2)));
  }
  x = nn::relu(dec_mid_(t, x));
  return integrate_root(dec_out_(t, x));
}

Var Tokenizer::fuse(Tape& t, Var zhat, const std::vector<std::vector<std::size_t>>& indices) const {
  const nn::Shape shape = zhat.shape();
  const std::size_t Dc = shape.back(), M = zhat.numel() / Dc;
  Var z = nn::reshape(zhat, {M, Dc});
  if (indices.empty()) return nn::reshape(z, shape);
  if (indices.size() > stages_.size()) throw DimensionError("more residual stages than the tokenizer has");
  Var total;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    if (indices[s].size() != M) {
      throw DimensionError("stage " + std::to_string(s + 1) + " has " + std::to_string(indices[s].size()) +
                           " indices for " + std::to_string(M) + " steps");
    }
    for (auto i : indices[s]) {
      if (i >= config_.residual_codes) throw DimensionError("residual index " + std::to_string(i) + " out of range");
    }
    Var rhat = nn::embedding(values(t, s), std::vector<long>(indices[s].begin(), indices[s].end()));
    total = s == 0 ? rhat : nn::add(total, rhat);
  }
  return nn::reshape(nn::add(z, total), shape);
}

Var loss_motion(Var prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("loss_motion: " + nn::shape_str(prediction.shape()) + " vs " + nn::shape_str(target.shape()));
  }
  return nn::mean(nn::abs(nn::sub(prediction, prediction.tape()->constant(target))));
}

RvqTerms rvq_stage_terms(const RvqOutput& q, std::size_t s, double beta) {
  const StageOutput& so = q.stages.at(s);
  Var r = q.r[s];
  RvqTerms out;
  out.commit = nn::mean(nn::square(nn::sub(nn::stop_gradient(so.rhat), r)));
  out.codebook = nn::scale(nn::mean(nn::square(nn::sub(so.rhat, nn::stop_gradient(r)))), Scalar(beta));
  out.soft = nn::mean(nn::square(nn::sub(so.rsoft, r)));
  return out;
}

Var loss_rvq(const RvqOutput& q, double beta) {
  Var total;
  for (std::size_t s = 0; s < q.stages.size(); ++s) {
    const RvqTerms t = rvq_stage_terms(q, s, beta);
    Var term = nn::add(nn::add(t.commit, t.codebook), t.soft);
    total = s == 0 ? term : nn::add(total, term);
  }
  return nn::scale(total, Scalar(1.0 / double(q.stages.size())));
}

Var loss_entropy(const std::vector<Var>& soft_rows, double gamma) {
  Var total;
  for (std::size_t s = 0; s < soft_rows.size(); ++s) {
    Var per_sample = nn::mean(nn::entropy_rows(soft_rows[s]));
    Var of_mean = nn::sum(nn::entropy_rows(nn::mean_rows(soft_rows[s])));
    Var term = nn::sub(per_sample, of_mean);
    total = s == 0 ? term : nn::add(total, term);
  }
  return nn::scale(total, Scalar(gamma / double(soft_rows.size())));
}

TokenizerLoss tokenizer_loss(const Tokenizer& model, const RvqOutput& q, Var reconstruction, const Tensor& target) {
  TokenizerLoss l;
  l.motion = loss_motion(joint_space(reconstruction), joint_space(target));
  l.rvq = loss_rvq(q, model.config().beta);
  std::vector<Var> soft;
  for (const auto& s : q.stages) soft.push_back(s.soft);
  l.entropy = loss_entropy(soft, model.config().gamma);
  l.total = nn::add(nn::add(l.motion, l.rvq), l.entropy);
  return l;
}

double perplexity(const std::vector<double>& usage) {
  long double h = 0.0L;
  for (double p : usage) {
    if (p > 0.0) h -= static_cast<long double>(p) * std::log(static_cast<long double>(p));
  }
  return static_cast<double>(std::exp(h));
}

double perplexity(const std::vector<std::vector<double>>& usage) {
  if (usage.empty()) return 0.0;
  double total = 0.0;
  for (const auto& u : usage) total += perplexity(u);
  return total / double(usage.size());
}

std::vector<double> usage_histogram(const std::vector<std::size_t>& indices, std::size_t codes) {
  std::vector<double> u(codes, 0.0);
  for (auto i : indices) u.at(i) += 1.0;
  for (auto& v : u) v /= indices.empty() ? 1.0 : double(indices.size());
  return u;
}

Batch make_batch(const pose::Catalog& catalog, const std::vector<motion::Motion>& clips, std::size_t stride) {
  if (clips.empty()) throw ValidationError("empty batch");
  const std::size_t B = clips.size(), L = clips[0].length(), Ld = L / stride, N = catalog.size();
  Batch b;
  b.features = Tensor({B, L, kFeatureDim});
  b.positions = Tensor({B, L, kFeatureDim});
  b.indicators = Tensor({B, Ld, N});
  for (std::size_t i = 0; i < B; ++i) {
    if (clips[i].length() != L) throw DimensionError("batch clips must share one length");
    const CanonicalMotion c = canonicalize(clips[i]);
    std::copy(c.features.values().begin(), c.features.values().end(), b.features.data() + i * L * kFeatureDim);
    std::copy(c.positions.values().begin(), c.positions.values().end(), b.positions.data() + i * L * kFeatureDim);
    const auto z = pose::parse_motion(catalog, clips[i], stride);
    for (std::size_t k = 0; k < Ld * N; ++k) b.indicators[i * Ld * N + k] = z.bits[k];
  }
  return b;
}

Tokens tokenize(const Tokenizer& model, const motion::Motion& m) {
  Tokens out;
  const std::size_t stride = model.config().stride;
  out.pose = pose::parse_motion(model.catalog(), m, stride);
  const CanonicalMotion c = canonicalize(m);
  out.origin_x = c.origin_x;
  out.origin_z = c.origin_z;
  Tape t(false);
  Tensor features = c.features.reshaped({1, m.length(), kFeatureDim});
  Var h = model.encode(t, t.constant(std::move(features)));
  Var zhat = model.pose_latents(t, out.pose.to_tensor().reshaped({1, out.pose.steps, out.pose.codes}));
  RvqOutput q = model.quantize(t, zhat, h, std::nullopt);
  for (auto& s : q.stages) out.residual.push_back(std::move(s.indices));
  return out;
}

Tensor decode_tokens(const Tokenizer& model, const pose::PoseCodeSequence& pose,
                     const std::vector<std::vector<std::size_t>>& residual) {
  if (pose.codes != model.codes()) {
    throw DimensionError("pose codes have " + std::to_string(pose.codes) + " columns, catalog has " +
                         std::to_string(model.codes()));
  }
  if (pose.steps == 0) throw ValidationError("cannot decode an empty pose-code sequence");
  Tape t(false);
  Var zhat = model.pose_latents(t, pose.to_tensor().reshaped({1, pose.steps, pose.codes}));
  Var F = model.fuse(t, zhat, residual);
  Tensor out = model.decode(t, F).value();
  return out.reshaped({out.dim(1), kFeatureDim});
}

motion::Motion reconstruct(const Tokenizer& model, const Tokens& tokens) {
  return restore_origin(decode_tokens(model, tokens.pose, tokens.residual), tokens.origin_x, tokens.origin_z);
}

}  // namespace pgr2m::tok
