#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "pgr2m/motion/motion.hpp"

namespace pgr2m::motion {

nlohmann::json to_json(const Motion& m, bool with_corpus_tags = false);
// `context` prefixes error messages (file and line).
Motion motion_from_json(const nlohmann::json& j, const std::string& context = "motion");

// Canonical serialization; byte-identical for identical motions.
std::string to_json_string(const Motion& m);
Motion parse_motion_json(const std::string& text, const std::string& context = "motion");

void save_motion(const Motion& m, const std::filesystem::path& path);
Motion load_motion(const std::filesystem::path& path);

void save_dataset(const MotionDataset& d, const std::filesystem::path& path);
MotionDataset load_dataset(const std::filesystem::path& path);

}  // namespace pgr2m::motion
