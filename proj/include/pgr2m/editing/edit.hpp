#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pgr2m/error.hpp"
#include "pgr2m/pipeline/bundle.hpp"

namespace pgr2m::edit {

enum class Action { activate, deactivate, set_family };

struct EditOp {
  std::size_t begin = 0, end = 0;  // downsampled steps [begin, end)
  Action action = Action::activate;
  std::string code;  // "<family>.<code>"
};

struct EditScript {
  std::vector<EditOp> ops;

  // [{"range": [a, b], "action": "set-family", "code": "torso.lean-forward"}, ...]
  static EditScript from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Invalid op; `op` is its zero-based position in the script.
struct EditError : ValidationError {
  EditError(std::size_t op, const std::string& what)
      : ValidationError("edit op " + std::to_string(op) + ": " + what), op(op) {}
  std::size_t op;
};

// Pure rewrite of indicator rows inside each op's range. Activating or
// deactivating a member of an exclusive family that would leave the family
// with other than one active code raises EditError naming the family;
// set-family switches the siblings off.
pose::PoseCodeSequence apply_edit(const pose::Catalog& catalog, const pose::PoseCodeSequence& z,
                                  const EditScript& script);

struct EditReport {
  motion::Motion edited;
  motion::Motion original;  // reconstruction of the unedited codes, same pipeline
  pose::PoseCodeSequence pose;
  pred::ResidualCodes residual;
  std::vector<double> deviation;   // per-frame mean |edited - original| over coordinates, meters
  std::optional<double> locality;  // inside / outside mean deviation; unset without edits
  double inside_mean = 0.0;
  double outside_mean = 0.0;
  // Segment steps whose re-parsed edited motion shows the requested code state.
  std::optional<double> code_recovery;

  nlohmann::json to_json() const;  // report fields, without the motions
};

// Parses `m`, applies the script, re-predicts every residual stage from the
// edited codes, decodes at m's origin and compares with the reconstruction of
// the unedited codes. The caption defaults to m's caption.
EditReport edit_motion(const Bundle& bundle, const motion::Motion& m, const EditScript& script,
                       const std::optional<std::string>& caption = std::nullopt,
                       const pred::SampleOptions& options = {}, std::uint64_t seed = 0);

}  // namespace pgr2m::edit
