#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pgr2m/motion/geometry.hpp"
#include "pgr2m/motion/motion.hpp"
#include "pgr2m/numerics/tape.hpp"
#include "pgr2m/pose/catalog.hpp"

namespace pgr2m::pose {

// L_d x N binary matrix, row-major.
struct PoseCodeSequence {
  std::size_t steps = 0;
  std::size_t codes = 0;
  std::vector<std::uint8_t> bits;

  PoseCodeSequence() = default;
  PoseCodeSequence(std::size_t steps, std::size_t codes) : steps(steps), codes(codes), bits(steps * codes, 0) {}

  std::uint8_t at(std::size_t i, std::size_t n) const { return bits[i * codes + n]; }
  std::uint8_t& at(std::size_t i, std::size_t n) { return bits[i * codes + n]; }
  bool operator==(const PoseCodeSequence& o) const = default;

  nn::Tensor to_tensor() const;
  nlohmann::json to_json() const;  // array of 0/1 rows
  static PoseCodeSequence from_json(const nlohmann::json& j, std::size_t codes);
};

// Measured quantity behind an entry's predicate.
double measure(const CatalogEntry& e, motion::PoseView pose, std::optional<motion::PoseView> previous);

// Indicator vector of one pose. `previous` is the frame before it, when any.
std::vector<std::uint8_t> parse_pose(const Catalog& catalog, motion::PoseView pose,
                                     std::optional<motion::PoseView> previous = std::nullopt);

// Rows are parse_pose of frames 0, l, 2l, ...; throws ConfigError unless l divides L.
PoseCodeSequence parse_motion(const Catalog& catalog, const motion::Motion& m, std::size_t stride = 4);

// Exactly-one-per-exclusive-family check; returns the first offending family.
std::optional<std::string> exclusivity_violation(const Catalog& catalog, const PoseCodeSequence& z);

// x-negated pose with left/right joints swapped.
std::vector<double> mirror_pose(motion::PoseView pose);

// z: [..., N] indicators, codebook: [N, D_c] rows -> [..., D_c].
nn::Var pose_latents(nn::Var z, nn::Var codebook);

// Mean over ordered pairs i != j of squared cosine similarity between rows.
double orthogonality(const nn::Tensor& codebook);

}  // namespace pgr2m::pose
