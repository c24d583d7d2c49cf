#include "pgr2m/eval/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/motion/geometry.hpp"
#include "pgr2m/numerics/parallel.hpp"
#include "pgr2m/tokenizer/train.hpp"

namespace pgr2m::eval {

using motion::Joint;

namespace {

using Mat = Eigen::Matrix<double, kKinematicDim, kKinematicDim>;
using Vec = Eigen::Matrix<double, kKinematicDim, 1>;

void moments(const std::vector<KinematicFeatures>& x, Vec& mu, Mat& cov) {
  mu.setZero();
  for (const auto& f : x) mu += Eigen::Map<const Vec>(f.data());
  mu /= double(x.size());
  cov.setZero();
  for (const auto& f : x) {
    const Vec d = Eigen::Map<const Vec>(f.data()) - mu;
    cov += d * d.transpose();
  }
  cov /= double(x.size() - 1);
}

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  const Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

KinematicFeatures kinematic_features(const motion::Motion& m) {
  const std::size_t L = m.length();
  if (L < 2) throw ValidationError("kinematic features need at least two frames");
  KinematicFeatures f{};
  const std::array<Joint, 6> speed_joints = {motion::kRoot, motion::kHead, motion::kLWrist, motion::kRWrist,
                                             motion::kLAnkle, motion::kRAnkle};
  for (std::size_t k = 0; k < speed_joints.size(); ++k) {
    double s = 0.0;
    for (std::size_t t = 1; t < L; ++t) s += (m.joint(t, speed_joints[k]) - m.joint(t - 1, speed_joints[k])).norm();
    f[k] = s * m.fps / double(L - 1);
  }
  const std::array<std::array<Joint, 3>, 4> limbs = {{{motion::kLShoulder, motion::kLElbow, motion::kLWrist},
                                                       {motion::kRShoulder, motion::kRElbow, motion::kRWrist},
                                                       {motion::kLHip, motion::kLKnee, motion::kLAnkle},
                                                       {motion::kRHip, motion::kRKnee, motion::kRAnkle}}};
  for (std::size_t k = 0; k < limbs.size(); ++k) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t t = 0; t < L; ++t) {
      const double a = motion::joint_angle(m.frame(t), limbs[k][0], limbs[k][1], limbs[k][2]);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    f[6 + k] = hi - lo;
  }
  const motion::Vec3 d = m.joint(L - 1, motion::kRoot) - m.joint(0, motion::kRoot);
  f[10] = std::hypot(d.x(), d.z());
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t t = 0; t < L; ++t) {
    lo = std::min(lo, m.joint(t, motion::kRoot).y());
    hi = std::max(hi, m.joint(t, motion::kRoot).y());
  }
  f[11] = hi - lo;
  return f;
}

double frechet_distance(const std::vector<KinematicFeatures>& a, const std::vector<KinematicFeatures>& b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("Frechet proxy needs at least two motions per set");
  Vec mu_a, mu_b;
  Mat ca, cb;
  moments(a, mu_a, ca);
  moments(b, mu_b, cb);
  if (mu_a == mu_b && ca == cb) return 0.0;
  // tr((Ca Cb)^1/2) = tr((Ca^1/2 Cb Ca^1/2)^1/2), symmetric and PSD.
  const Mat sa = psd_sqrt(ca);
  const Mat inner = sa * cb * sa;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

double frechet_proxy(const std::vector<const motion::Motion*>& a, const std::vector<const motion::Motion*>& b) {
  auto feats = [](const std::vector<const motion::Motion*>& ms) {
    std::vector<KinematicFeatures> out(ms.size());
    nn::parallel_for(ms.size(), [&](std::size_t i) { out[i] = kinematic_features(*ms[i]); });
    return out;
  };
  return frechet_distance(feats(a), feats(b));
}

nlohmann::json evaluate_bundle(const Bundle& bundle, const std::vector<const motion::Motion*>& motions,
                               std::uint64_t seed) {
  const tok::TokenizerEval te = tok::evaluate_tokenizer(bundle.tokenizer, motions);
  nlohmann::json j = tok::to_json(te);
  std::vector<motion::Motion> recon(motions.size()), gen(motions.size());
  std::vector<std::uint8_t> generated(motions.size(), 0);
  nn::parallel_for(motions.size(), [&](std::size_t i) {
    recon[i] = tok::reconstruct(bundle.tokenizer, tok::tokenize(bundle.tokenizer, *motions[i]));
    try {
      gen[i] = generate(bundle, motions[i]->caption, motions[i]->keywords, {}, seed + i).motion;
      generated[i] = gen[i].length() >= 2;
    } catch (const EmptyGenerationError&) {
    }
  });
  std::vector<const motion::Motion*> rp, gp;
  for (std::size_t i = 0; i < motions.size(); ++i) {
    rp.push_back(&recon[i]);
    if (generated[i]) gp.push_back(&gen[i]);
  }
  j["frechet_reconstruction"] = motions.size() >= 2 ? nlohmann::json(frechet_proxy(motions, rp)) : nlohmann::json(nullptr);
  j["frechet_generation"] = gp.size() >= 2 && motions.size() >= 2 ? nlohmann::json(frechet_proxy(motions, gp)) : nlohmann::json(nullptr);
  j["generated"] = gp.size();
  return j;
}

}  // namespace pgr2m::eval
