#pragma once

#include <filesystem>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "pgr2m/motion/skeleton.hpp"
#include "pgr2m/numerics/init.hpp"

namespace pgr2m::motion {

// A captioned sequence of global joint positions, meters, 20 fps.
struct Motion {
  std::vector<double> frames;  // L x 48, row-major
  std::string caption;
  std::vector<std::string> keywords;
  int fps = kFps;
  // Corpus bookkeeping; serialized only in dataset lines when set.
  std::string family;
  std::string split;

  std::size_t length() const noexcept { return frames.size() / kFeatureDim; }
  std::span<const double> frame(std::size_t i) const { return {frames.data() + i * kFeatureDim, kFeatureDim}; }
  std::span<double> frame(std::size_t i) { return {frames.data() + i * kFeatureDim, kFeatureDim}; }
  Vec3 joint(std::size_t i, std::size_t j) const {
    const double* p = frames.data() + i * kFeatureDim + 3 * j;
    return {p[0], p[1], p[2]};
  }
};

// Throws ValidationError when frames are non-finite, the root is below the
// ground, or the frame buffer is ragged.
void validate(const Motion& m);

struct MotionTooShort : std::runtime_error {
  MotionTooShort(std::size_t length, std::size_t window)
      : std::runtime_error("motion of " + std::to_string(length) + " frames is shorter than window " +
                           std::to_string(window)),
        length(length),
        window(window) {}
  std::size_t length;
  std::size_t window;
};

// Contiguous window-frame slice centered at a uniformly drawn valid frame.
// Throws MotionTooShort; callers skip or pad such records.
Motion augment_crop(const Motion& m, std::size_t window, nn::Rng& rng);

Motion slice_frames(const Motion& m, std::size_t begin, std::size_t count);

struct MotionDataset {
  std::vector<Motion> motions;
  std::uint64_t seed = 0;

  std::vector<const Motion*> split(std::string_view tag) const;
};

}  // namespace pgr2m::motion
