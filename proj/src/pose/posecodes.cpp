#include "pgr2m/pose/posecodes.hpp"

#include <algorithm>
#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"

namespace pgr2m::pose {

using motion::PoseView;

namespace {

std::size_t joint_index(const std::string& name) {
  const auto& names = motion::default_skeleton().joint_names;
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

std::size_t first_child(std::size_t j) {
  const auto& parent = motion::default_skeleton().parent;
  for (std::size_t c = 0; c < motion::kJoints; ++c) {
    if (parent[c] == static_cast<int>(j)) return c;
  }
  throw ConfigError("joint angle needs a joint with a child");
}

}  // namespace

nn::Tensor PoseCodeSequence::to_tensor() const {
  nn::Tensor t({steps, codes});
  for (std::size_t i = 0; i < bits.size(); ++i) t[i] = bits[i];
  return t;
}

nlohmann::json PoseCodeSequence::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < steps; ++i) {
    rows.push_back(std::vector<int>(bits.begin() + static_cast<long>(i * codes),
                                    bits.begin() + static_cast<long>((i + 1) * codes)));
  }
  return rows;
}

PoseCodeSequence PoseCodeSequence::from_json(const nlohmann::json& j, std::size_t codes) {
  if (!j.is_array()) throw ParseError("pose codes must be an array of rows");
  PoseCodeSequence z(j.size(), codes);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != codes) {
      throw DimensionError("pose code row " + std::to_string(i) + " must have " + std::to_string(codes) + " entries");
    }
    for (std::size_t n = 0; n < codes; ++n) {
      const auto& v = j[i][n];
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        throw ParseError("pose code row " + std::to_string(i) + " entry " + std::to_string(n) + " must be 0 or 1");
      }
      z.at(i, n) = static_cast<std::uint8_t>(v.get<int>());
    }
  }
  return z;
}

double measure(const CatalogEntry& e, PoseView pose, std::optional<PoseView> previous) {
  using motion::joint_of;
  const auto& p = e.predicate;
  if (p == "joint_angle") {
    const std::size_t j = joint_index(e.joint);
    return motion::joint_angle(pose, static_cast<std::size_t>(motion::default_skeleton().parent[j]), j,
                               first_child(j));
  }
  if (p == "torso_pitch") return motion::torso_pitch(pose);
  if (p == "joint_distance") return (joint_of(pose, joint_index(e.joint)) - joint_of(pose, joint_index(e.joint_b))).norm();
  if (p == "height_above") return joint_of(pose, joint_index(e.joint)).y() - joint_of(pose, joint_index(e.joint_b)).y();
  if (p == "height") return joint_of(pose, joint_index(e.joint)).y();
  if (p == "root_speed") {
    if (!previous) return 0.0;
    return (joint_of(pose, motion::kRoot) - joint_of(*previous, motion::kRoot)).norm();
  }
  throw ConfigError("unknown predicate '" + p + "'");
}

std::vector<std::uint8_t> parse_pose(const Catalog& catalog, PoseView pose, std::optional<PoseView> previous) {
  if (pose.size() != motion::kFeatureDim) {
    throw DimensionError("pose has " + std::to_string(pose.size()) + " values, expected D=48");
  }
  for (double v : pose) {
    if (!std::isfinite(v)) throw NumericError("pose contains a non-finite coordinate");
  }
  if (previous) {
    for (double v : *previous) {
      if (!std::isfinite(v)) throw NumericError("previous pose contains a non-finite coordinate");
    }
  }
  std::vector<std::uint8_t> z(catalog.size(), 0);
  for (std::size_t n = 0; n < catalog.size(); ++n) {
    const auto& e = catalog[n];
    const double x = measure(e, pose, previous);
    z[n] = (!e.min || x >= *e.min) && (!e.max || x < *e.max);
  }
  return z;
}

PoseCodeSequence parse_motion(const Catalog& catalog, const motion::Motion& m, std::size_t stride) {
  const std::size_t L = m.length();
  if (stride == 0 || L % stride != 0) {
    throw ConfigError("stride " + std::to_string(stride) + " does not divide motion length " + std::to_string(L));
  }
  PoseCodeSequence z(L / stride, catalog.size());
  for (std::size_t i = 0; i < z.steps; ++i) {
    const std::size_t t = i * stride;
    std::optional<PoseView> prev;
    if (t > 0) prev = m.frame(t - 1);
    const auto row = parse_pose(catalog, m.frame(t), prev);
    std::copy(row.begin(), row.end(), z.bits.begin() + static_cast<long>(i * z.codes));
  }
  return z;
}

std::optional<std::string> exclusivity_violation(const Catalog& catalog, const PoseCodeSequence& z) {
  for (std::size_t i = 0; i < z.steps; ++i) {
    for (std::size_t f = 0; f < catalog.families().size(); ++f) {
      if (!catalog.exclusive(f)) continue;
      int active = 0;
      for (std::size_t n : catalog.members(f)) active += z.at(i, n);
      if (active != 1) return catalog.families()[f];
    }
  }
  return std::nullopt;
}

std::vector<double> mirror_pose(PoseView pose) {
  std::vector<double> out(pose.size());
  for (std::size_t j = 0; j < motion::kJoints; ++j) {
    const std::size_t src = motion::mirror_joint(static_cast<motion::Joint>(j));
    out[3 * j] = -pose[3 * src];
    out[3 * j + 1] = pose[3 * src + 1];
    out[3 * j + 2] = pose[3 * src + 2];
  }
  return out;
}

nn::Var pose_latents(nn::Var z, nn::Var codebook) {
  if (codebook.value().rank() != 2 || z.shape().back() != codebook.dim(0)) {
    throw DimensionError("pose indicators " + nn::shape_str(z.shape()) + " do not match codebook " +
                         nn::shape_str(codebook.shape()));
  }
  return nn::matmul(z, codebook);
}

double orthogonality(const nn::Tensor& codebook) {
  if (codebook.rank() != 2) throw DimensionError("codebook must be a matrix, got " + nn::shape_str(codebook.shape()));
  const std::size_t N = codebook.dim(0), D = codebook.dim(1);
  if (N < 2) return 0.0;
  std::vector<double> norms(N);
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < D; ++k) s += double(codebook.at(i, k)) * codebook.at(i, k);
    if (s == 0.0) throw NumericError("pose code column " + std::to_string(i) + " has zero norm");
    norms[i] = std::sqrt(s);
  }
  double total = 0;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      if (i == j) continue;
      double dot = 0;
      for (std::size_t k = 0; k < D; ++k) dot += double(codebook.at(i, k)) * codebook.at(j, k);
      const double c = dot / (norms[i] * norms[j]);
      total += c * c;
    }
  }
  return total / (double(N) * double(N - 1));
}

}  // namespace pgr2m::pose
