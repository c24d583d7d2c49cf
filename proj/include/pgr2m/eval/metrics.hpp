#pragma once

#include <array>
#include <vector>

#include "json.hpp"
#include "pgr2m/motion/motion.hpp"
#include "pgr2m/pipeline/bundle.hpp"

namespace pgr2m::eval {

inline constexpr std::size_t kKinematicDim = 12;
using KinematicFeatures = std::array<double, kKinematicDim>;

// Mean speeds of root, head, both wrists and both ankles (m/s); ranges of
// both elbow and knee angles (rad); horizontal root displacement (m) and
// root height range (m).
KinematicFeatures kinematic_features(const motion::Motion& m);

// Frechet distance between Gaussians fitted to the two feature sets.
// ValidationError when either set has fewer than two motions.
double frechet_distance(const std::vector<KinematicFeatures>& a, const std::vector<KinematicFeatures>& b);
double frechet_proxy(const std::vector<const motion::Motion*>& a, const std::vector<const motion::Motion*>& b);

// Tokenizer metrics plus the proxy for reconstructions and deterministic
// generations from the same captions.
nlohmann::json evaluate_bundle(const Bundle& bundle, const std::vector<const motion::Motion*>& motions,
                               std::uint64_t seed = 0);

}  // namespace pgr2m::eval
