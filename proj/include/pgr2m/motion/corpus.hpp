#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "pgr2m/motion/motion.hpp"

namespace pgr2m::motion {

inline constexpr std::array<std::string_view, 8> kFamilies = {
    "walk", "walk-turn-left", "walk-turn-right", "raise-left-arm", "raise-right-arm", "squat", "bow", "wave"};

// Procedural corpus: motion i is a pure function of (seed, i). Every 20th
// record is validation, the next three are test, the rest train.
MotionDataset generate_corpus(std::uint64_t seed, std::size_t count);
Motion generate_motion(std::uint64_t seed, std::size_t index);
// One motion of a given family drawn from a dedicated stream.
Motion generate_family_motion(std::string_view family, std::uint64_t seed);

std::string split_of_index(std::size_t index);

// Rule-based label from joint trajectories; "unknown" when nothing matches.
std::string classify_family(const Motion& m);

std::map<std::string, std::size_t> family_histogram(const MotionDataset& d);

}  // namespace pgr2m::motion
