#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace pgr2m::pose {

inline constexpr const char* kCatalogVersion = "pgr2m-cat-v1";

// One pose code: active when the predicate's measure lies in [min, max).
struct CatalogEntry {
  std::string name;       // "<family>.<code>", e.g. "torso.lean-forward"
  std::string family;     // exclusivity group
  std::string attribute;  // coarse attribute kind shared across left/right families
  std::string body_part;
  std::string predicate;  // joint_angle | torso_pitch | joint_distance | height_above | height | root_speed
  std::string joint;      // primary joint name, empty when unused
  std::string joint_b;    // second joint for joint_distance / height_above
  std::optional<double> min;
  std::optional<double> max;

  std::string code() const { return name.substr(name.find('.') + 1); }
};

class Catalog {
 public:
  Catalog() = default;
  Catalog(std::string version, std::vector<CatalogEntry> entries);

  const std::string& version() const noexcept { return version_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const CatalogEntry& operator[](std::size_t n) const { return entries_[n]; }
  const std::vector<CatalogEntry>& entries() const noexcept { return entries_; }

  // Families in catalog order, and the entry indices of each.
  const std::vector<std::string>& families() const noexcept { return families_; }
  const std::vector<std::size_t>& members(std::size_t family) const { return members_[family]; }
  std::size_t family_of(std::size_t n) const { return family_index_[n]; }
  std::optional<std::size_t> find_family(const std::string& family) const;
  // A family with two or more codes has exactly one active code per frame;
  // a single-code family is a free on/off flag.
  bool exclusive(std::size_t family) const { return members_[family].size() > 1; }

  std::optional<std::size_t> find(const std::string& name) const;
  // Entry index of the left/right counterpart (itself for midline codes).
  std::size_t mirror_of(std::size_t n) const { return mirror_[n]; }

  nlohmann::json to_json() const;
  static Catalog from_json(const nlohmann::json& j);

 private:
  std::string version_;
  std::vector<CatalogEntry> entries_;
  std::vector<std::string> families_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> family_index_;
  std::vector<std::size_t> mirror_;
};

// Shipped desk-scale catalog (23 codes in 12 families).
const Catalog& default_catalog();
Catalog load_catalog(const std::filesystem::path& path);
void save_catalog(const Catalog& c, const std::filesystem::path& path);

}  // namespace pgr2m::pose
