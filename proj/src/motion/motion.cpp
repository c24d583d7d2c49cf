#include "pgr2m/motion/motion.hpp"

#include <cmath>

#include "pgr2m/error.hpp"

namespace pgr2m::motion {

void validate(const Motion& m) {
  if (m.frames.size() % kFeatureDim != 0) {
    throw DimensionError("frame buffer of " + std::to_string(m.frames.size()) + " values is not a multiple of D=" +
                         std::to_string(kFeatureDim));
  }
  if (m.frames.empty()) throw ValidationError("motion has no frames");
  for (std::size_t i = 0; i < m.length(); ++i) {
    auto f = m.frame(i);
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      if (!std::isfinite(f[k])) {
        throw ValidationError("frame " + std::to_string(i) + " value " + std::to_string(k) + " is not finite");
      }
    }
    if (f[3 * kRoot + 1] < 0.0) throw ValidationError("frame " + std::to_string(i) + ": root below ground");
  }
  if (m.keywords.size() > 11) throw ValidationError("at most 11 keywords, got " + std::to_string(m.keywords.size()));
}

Motion slice_frames(const Motion& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.length()) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") of " +
                         std::to_string(m.length()) + " frames");
  }
  Motion out = m;
  out.frames.assign(m.frames.begin() + static_cast<long>(begin * kFeatureDim),
                    m.frames.begin() + static_cast<long>((begin + count) * kFeatureDim));
  return out;
}

Motion augment_crop(const Motion& m, std::size_t window, nn::Rng& rng) {
  const std::size_t L = m.length();
  if (L < window) throw MotionTooShort(L, window);
  // Window centers range over [window/2, L - window/2]; start = center - window/2.
  const std::size_t starts = L - window + 1;
  const auto start = static_cast<std::size_t>(nn::uniform01(rng) * static_cast<double>(starts));
  return slice_frames(m, std::min(start, starts - 1), window);
}

std::vector<const Motion*> MotionDataset::split(std::string_view tag) const {
  std::vector<const Motion*> out;
  for (const auto& m : motions) {
    if (m.split == tag) out.push_back(&m);
  }
  return out;
}

}  // namespace pgr2m::motion
