#include "pgr2m/motion/io.hpp"

#include <fstream>
#include <sstream>

#include "pgr2m/error.hpp"

namespace pgr2m::motion {

using nlohmann::json;

json to_json(const Motion& m, bool with_corpus_tags) {
  json frames = json::array();
  for (std::size_t i = 0; i < m.length(); ++i) {
    auto f = m.frame(i);
    frames.push_back(json(std::vector<double>(f.begin(), f.end())));
  }
  json j = {{"skeleton", kSkeletonName}, {"fps", m.fps}, {"caption", m.caption}, {"keywords", m.keywords},
            {"frames", std::move(frames)}};
  if (with_corpus_tags) {
    if (!m.family.empty()) j["family"] = m.family;
    if (!m.split.empty()) j["split"] = m.split;
  }
  return j;
}

namespace {

const json& require(const json& j, const char* key, const std::string& context) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(context + ": missing key \"" + key + "\"");
  return *it;
}

}  // namespace

Motion motion_from_json(const json& j, const std::string& context) {
  if (!j.is_object()) throw ParseError(context + ": expected a JSON object");
  Motion m;
  const json& frames = require(j, "frames", context);
  if (!frames.is_array()) throw ParseError(context + ": \"frames\" must be an array");
  if (auto it = j.find("skeleton"); it != j.end()) {
    if (!it->is_string() || it->get<std::string>() != kSkeletonName) {
      throw ParseError(context + ": \"skeleton\" must be \"" + std::string(kSkeletonName) + "\"");
    }
  }
  if (auto it = j.find("fps"); it != j.end()) {
    if (!it->is_number_integer() || it->get<int>() != kFps) {
      throw ParseError(context + ": \"fps\" must be " + std::to_string(kFps));
    }
  }
  if (auto it = j.find("caption"); it != j.end()) {
    if (!it->is_string()) throw ParseError(context + ": \"caption\" must be a string");
    m.caption = it->get<std::string>();
  }
  if (auto it = j.find("keywords"); it != j.end()) {
    if (!it->is_array()) throw ParseError(context + ": \"keywords\" must be an array of strings");
    for (const auto& k : *it) {
      if (!k.is_string()) throw ParseError(context + ": \"keywords\" must be an array of strings");
      m.keywords.push_back(k.get<std::string>());
    }
  }
  if (auto it = j.find("family"); it != j.end() && it->is_string()) m.family = it->get<std::string>();
  if (auto it = j.find("split"); it != j.end() && it->is_string()) m.split = it->get<std::string>();
  m.frames.reserve(frames.size() * kFeatureDim);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& row = frames[i];
    if (!row.is_array()) throw ParseError(context + ": frames[" + std::to_string(i) + "] must be an array");
    if (row.size() != kFeatureDim) {
      throw DimensionError(context + ": frames[" + std::to_string(i) + "] has " + std::to_string(row.size()) +
                           " values, expected D=" + std::to_string(kFeatureDim));
    }
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      if (!row[k].is_number()) {
        throw ParseError(context + ": frames[" + std::to_string(i) + "][" + std::to_string(k) + "] is not a number");
      }
      m.frames.push_back(row[k].get<double>());
    }
  }
  validate(m);
  return m;
}

std::string to_json_string(const Motion& m) { return to_json(m).dump(); }

Motion parse_motion_json(const std::string& text, const std::string& context) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(context + ": " + e.what());
  }
  return motion_from_json(j, context);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void save_motion(const Motion& m, const std::filesystem::path& path) { write_file(path, to_json_string(m) + "\n"); }

Motion load_motion(const std::filesystem::path& path) { return parse_motion_json(read_file(path), path.string()); }

void save_dataset(const MotionDataset& d, const std::filesystem::path& path) {
  std::string text;
  for (const auto& m : d.motions) {
    text += to_json(m, true).dump();
    text += '\n';
  }
  write_file(path, text);
}

MotionDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  MotionDataset d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    d.motions.push_back(parse_motion_json(line, path.string() + ":" + std::to_string(lineno)));
  }
  if (d.motions.empty()) throw ParseError(path.string() + ": dataset has no records");
  return d;
}

}  // namespace pgr2m::motion
