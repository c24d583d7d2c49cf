#include "pgr2m/pose/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "pgr2m/error.hpp"
#include "pgr2m/motion/skeleton.hpp"

namespace pgr2m::pose {

namespace {

const std::set<std::string> kPredicates = {"joint_angle", "torso_pitch", "joint_distance",
                                           "height_above", "height", "root_speed"};

bool known_joint(const std::string& name) {
  const auto& names = motion::default_skeleton().joint_names;
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string mirrored_name(const std::string& name) {
  if (name.rfind("l-", 0) == 0) return "r-" + name.substr(2);
  if (name.rfind("r-", 0) == 0) return "l-" + name.substr(2);
  return name;
}

}  // namespace

Catalog::Catalog(std::string version, std::vector<CatalogEntry> entries)
    : version_(std::move(version)), entries_(std::move(entries)) {
  if (entries_.empty()) throw ValidationError("catalog has no entries");
  std::set<std::string> names;
  for (const auto& e : entries_) {
    if (!names.insert(e.name).second) throw ValidationError("duplicate catalog entry '" + e.name + "'");
    if (e.name.find('.') == std::string::npos || e.name.substr(0, e.name.find('.')) != e.family) {
      throw ValidationError("catalog entry '" + e.name + "' must be named <family>.<code> with family '" + e.family +
                            "'");
    }
    if (!kPredicates.count(e.predicate)) {
      throw ValidationError("catalog entry '" + e.name + "' has unknown predicate '" + e.predicate + "'");
    }
    const bool needs_joint = e.predicate != "torso_pitch" && e.predicate != "root_speed";
    const bool needs_pair = e.predicate == "joint_distance" || e.predicate == "height_above";
    if (needs_joint && !known_joint(e.joint)) {
      throw ValidationError("catalog entry '" + e.name + "' names unknown joint '" + e.joint + "'");
    }
    if (needs_pair && !known_joint(e.joint_b)) {
      throw ValidationError("catalog entry '" + e.name + "' names unknown joint '" + e.joint_b + "'");
    }
    if (!e.min && !e.max) throw ValidationError("catalog entry '" + e.name + "' has neither min nor max");
    auto it = std::find(families_.begin(), families_.end(), e.family);
    if (it == families_.end()) {
      families_.push_back(e.family);
      members_.emplace_back();
      it = families_.end() - 1;
    }
    const auto f = static_cast<std::size_t>(it - families_.begin());
    members_[f].push_back(family_index_.size());
    family_index_.push_back(f);
  }
  mirror_.resize(entries_.size());
  for (std::size_t n = 0; n < entries_.size(); ++n) {
    const auto m = find(mirrored_name(entries_[n].name));
    mirror_[n] = m ? *m : n;
  }
}

std::optional<std::size_t> Catalog::find(const std::string& name) const {
  for (std::size_t n = 0; n < entries_.size(); ++n) {
    if (entries_[n].name == name) return n;
  }
  return std::nullopt;
}

std::optional<std::size_t> Catalog::find_family(const std::string& family) const {
  auto it = std::find(families_.begin(), families_.end(), family);
  if (it == families_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - families_.begin());
}

nlohmann::json Catalog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json params = nlohmann::json::object();
    if (!e.joint.empty()) params["joint"] = e.joint;
    if (!e.joint_b.empty()) params["joint_b"] = e.joint_b;
    if (e.min) params["min"] = *e.min;
    if (e.max) params["max"] = *e.max;
    arr.push_back({{"name", e.name},
                   {"family", e.family},
                   {"attribute", e.attribute},
                   {"body_part", e.body_part},
                   {"predicate", e.predicate},
                   {"params", params}});
  }
  return {{"version", version_}, {"entries", arr}};
}

Catalog Catalog::from_json(const nlohmann::json& j) {
  try {
    std::vector<CatalogEntry> entries;
    for (const auto& x : j.at("entries")) {
      CatalogEntry e;
      e.name = x.at("name").get<std::string>();
      e.family = x.at("family").get<std::string>();
      e.attribute = x.value("attribute", "");
      e.body_part = x.value("body_part", "");
      e.predicate = x.at("predicate").get<std::string>();
      const auto& p = x.at("params");
      e.joint = p.value("joint", "");
      e.joint_b = p.value("joint_b", "");
      if (p.contains("min")) e.min = p.at("min").get<double>();
      if (p.contains("max")) e.max = p.at("max").get<double>();
      entries.push_back(std::move(e));
    }
    return Catalog(j.at("version").get<std::string>(), std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("catalog: ") + e.what());
  }
}

const Catalog& default_catalog() {
  static const Catalog catalog = [] {
    std::vector<CatalogEntry> v;
    auto add = [&](std::string family, std::string code, std::string attribute, std::string part, std::string pred,
                   std::string joint, std::string joint_b, std::optional<double> lo, std::optional<double> hi) {
      v.push_back({family + "." + code, family, std::move(attribute), std::move(part), std::move(pred),
                   std::move(joint), std::move(joint_b), lo, hi});
    };
    const std::optional<double> none;
    for (const char* side : {"l", "r"}) {
      const std::string s = side, part = s == "l" ? "left arm" : "right arm";
      add(s + "-elbow", "bent", "bend", part, "joint_angle", s + "_elbow", "", none, 2.0);
      add(s + "-elbow", "straight", "bend", part, "joint_angle", s + "_elbow", "", 2.0, none);
    }
    for (const char* side : {"l", "r"}) {
      const std::string s = side, part = s == "l" ? "left leg" : "right leg";
      add(s + "-knee", "bent", "bend", part, "joint_angle", s + "_knee", "", none, 2.0);
      add(s + "-knee", "straight", "bend", part, "joint_angle", s + "_knee", "", 2.0, none);
    }
    add("torso", "lean-backward", "lean", "torso", "torso_pitch", "", "", none, -0.25);
    add("torso", "upright", "lean", "torso", "torso_pitch", "", "", -0.25, 0.25);
    add("torso", "lean-forward", "lean", "torso", "torso_pitch", "", "", 0.25, none);
    add("wrist-distance", "close", "hand-spread", "hands", "joint_distance", "l_wrist", "r_wrist", none, 0.4);
    add("wrist-distance", "wide", "hand-spread", "hands", "joint_distance", "l_wrist", "r_wrist", 0.4, none);
    for (const char* side : {"l", "r"}) {
      const std::string s = side, part = s == "l" ? "left hand" : "right hand";
      add(s + "-wrist", "above-neck", "hand-height", part, "height_above", s + "_wrist", "neck", 0.0, none);
      add(s + "-wrist", "below-neck", "hand-height", part, "height_above", s + "_wrist", "neck", none, 0.0);
    }
    for (const char* side : {"l", "r"}) {
      const std::string s = side, part = s == "l" ? "left foot" : "right foot";
      add(s + "-ankle", "contact", "contact", part, "height", s + "_ankle", "", none, 0.08);
    }
    add("feet", "together", "stance", "feet", "joint_distance", "l_ankle", "r_ankle", none, 0.3);
    add("feet", "apart", "stance", "feet", "joint_distance", "l_ankle", "r_ankle", 0.3, none);
    add("root-speed", "still", "speed", "whole body", "root_speed", "", "", none, 0.02);
    add("root-speed", "moving", "speed", "whole body", "root_speed", "", "", 0.02, none);
    return Catalog(kCatalogVersion, std::move(v));
  }();
  return catalog;
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Catalog::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_catalog(const Catalog& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << c.to_json().dump(2) << "\n";
}

}  // namespace pgr2m::pose
