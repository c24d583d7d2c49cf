#include "pgr2m/editing/edit.hpp"

#include <cmath>

#include "pgr2m/predictors/text.hpp"
#include "pgr2m/tokenizer/features.hpp"

namespace pgr2m::edit {

namespace {

constexpr std::size_t kGuardSteps = 2;

Action parse_action(const std::string& s, std::size_t op) {
  if (s == "activate") return Action::activate;
  if (s == "deactivate") return Action::deactivate;
  if (s == "set-family") return Action::set_family;
  throw EditError(op, "unknown action '" + s + "'");
}

const char* action_name(Action a) {
  switch (a) {
    case Action::activate: return "activate";
    case Action::deactivate: return "deactivate";
    case Action::set_family: return "set-family";
  }
  return "";
}

}  // namespace

EditScript EditScript::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("edit script must be a JSON array of ops");
  EditScript s;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    try {
      EditOp op;
      const auto& r = o.at("range");
      if (!r.is_array() || r.size() != 2) throw EditError(i, "range must be [begin, end]");
      const long a = r[0].get<long>(), b = r[1].get<long>();
      if (a < 0 || b <= a) throw EditError(i, "range [" + std::to_string(a) + ", " + std::to_string(b) + ") is empty or negative");
      op.begin = static_cast<std::size_t>(a);
      op.end = static_cast<std::size_t>(b);
      std::string action = o.at("action").get<std::string>();
      // "set-family:<code>" is accepted as shorthand.
      if (action.rfind("set-family:", 0) == 0) {
        op.code = action.substr(11);
        action = "set-family";
      }
      op.action = parse_action(action, i);
      if (o.contains("code")) op.code = o.at("code").get<std::string>();
      if (op.code.empty()) throw EditError(i, "missing code");
      s.ops.push_back(std::move(op));
    } catch (const nlohmann::json::exception& e) {
      throw EditError(i, std::string("malformed op: ") + e.what());
    }
  }
  return s;
}

nlohmann::json EditScript::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& op : ops) j.push_back({{"range", {op.begin, op.end}}, {"action", action_name(op.action)}, {"code", op.code}});
  return j;
}

pose::PoseCodeSequence apply_edit(const pose::Catalog& catalog, const pose::PoseCodeSequence& z,
                                  const EditScript& script) {
  pose::PoseCodeSequence out = z;
  for (std::size_t k = 0; k < script.ops.size(); ++k) {
    const EditOp& op = script.ops[k];
    const auto code = catalog.find(op.code);
    if (!code) throw EditError(k, "unknown code '" + op.code + "'");
    if (op.end > z.steps || op.begin >= op.end) {
      throw EditError(k, "range [" + std::to_string(op.begin) + ", " + std::to_string(op.end) + ") outside [0, " +
                             std::to_string(z.steps) + ")");
    }
    const std::size_t f = catalog.family_of(*code);
    const bool exclusive = catalog.exclusive(f);
    for (std::size_t i = op.begin; i < op.end; ++i) {
      switch (op.action) {
        case Action::set_family:
          for (std::size_t n : catalog.members(f)) out.at(i, n) = n == *code;
          break;
        case Action::activate:
          if (exclusive && !out.at(i, *code)) {
            for (std::size_t n : catalog.members(f)) {
              if (out.at(i, n)) {
                throw EditError(k, "activating '" + op.code + "' at step " + std::to_string(i) +
                                       " violates exclusivity of family '" + catalog.families()[f] +
                                       "'; use set-family");
              }
            }
          }
          out.at(i, *code) = 1;
          break;
        case Action::deactivate:
          if (exclusive && out.at(i, *code)) {
            throw EditError(k, "deactivating '" + op.code + "' at step " + std::to_string(i) +
                                   " leaves family '" + catalog.families()[f] + "' without an active code; use set-family");
          }
          out.at(i, *code) = 0;
          break;
      }
    }
  }
  return out;
}

nlohmann::json EditReport::to_json() const {
  nlohmann::json j = {{"deviation", deviation},
                      {"inside_mean", inside_mean},
                      {"outside_mean", outside_mean},
                      {"pose_codes", pose.to_json()},
                      {"residual_indices", residual}};
  j["locality_ratio"] = locality ? nlohmann::json(*locality) : nlohmann::json(nullptr);
  j["code_recovery"] = code_recovery ? nlohmann::json(*code_recovery) : nlohmann::json(nullptr);
  return j;
}

EditReport edit_motion(const Bundle& bundle, const motion::Motion& m, const EditScript& script,
                       const std::optional<std::string>& caption, const pred::SampleOptions& options,
                       std::uint64_t seed) {
  const auto& catalog = bundle.catalog();
  const std::size_t stride = bundle.config().stride;
  motion::validate(m);
  const pose::PoseCodeSequence z = pose::parse_motion(catalog, m, stride);
  const pose::PoseCodeSequence edited = apply_edit(catalog, z, script);
  const pred::TextInput text = pred::text_input(caption.value_or(m.caption), m.keywords, bundle.config().text_slots);
  const tok::CanonicalMotion c = tok::canonicalize(m);

  // Both sides draw from identically seeded streams, so an empty script
  // reproduces the original exactly in either mode.
  nn::Rng rng_original(nn::derive_seed(seed, 0xed17)), rng_edited(nn::derive_seed(seed, 0xed17));
  const auto residual_original = pred::sample_residual_codes(bundle.refine, text, z, options, rng_original);
  EditReport r;
  r.pose = edited;
  r.residual = pred::sample_residual_codes(bundle.refine, text, edited, options, rng_edited);
  r.original = decode_motion(bundle.tokenizer, z, residual_original, c.origin_x, c.origin_z);
  r.edited = decode_motion(bundle.tokenizer, edited, r.residual, c.origin_x, c.origin_z);
  for (auto* out : {&r.original, &r.edited}) {
    out->caption = caption.value_or(m.caption);
    out->keywords = m.keywords;
  }

  const std::size_t L = m.length();
  r.deviation.assign(L, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    double s = 0.0;
    for (std::size_t d = 0; d < motion::kFeatureDim; ++d) {
      s += std::abs(r.edited.frames[t * motion::kFeatureDim + d] - r.original.frames[t * motion::kFeatureDim + d]);
    }
    r.deviation[t] = s / double(motion::kFeatureDim);
  }
  if (script.ops.empty()) return r;

  // Step classes: 2 inside a segment, 1 guard band, 0 outside.
  std::vector<int> cls(z.steps, 0);
  for (const auto& op : script.ops) {
    const std::size_t a = op.begin > kGuardSteps ? op.begin - kGuardSteps : 0;
    const std::size_t b = std::min(z.steps, op.end + kGuardSteps);
    for (std::size_t i = a; i < b; ++i) cls[i] = std::max(cls[i], 1);
  }
  for (const auto& op : script.ops)
    for (std::size_t i = op.begin; i < op.end; ++i) cls[i] = 2;
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0;
  for (std::size_t t = 0; t < L; ++t) {
    const int k = cls[t / stride];
    if (k == 2) in_sum += r.deviation[t], ++in_n;
    if (k == 0) out_sum += r.deviation[t], ++out_n;
  }
  r.inside_mean = in_n ? in_sum / double(in_n) : 0.0;
  r.outside_mean = out_n ? out_sum / double(out_n) : 0.0;
  if (in_n && out_n) r.locality = r.outside_mean > 0 ? r.inside_mean / r.outside_mean : INFINITY;

  // Closed loop: does the decoded motion parse back to the requested state?
  const pose::PoseCodeSequence reparsed = pose::parse_motion(catalog, r.edited, stride);
  std::size_t hits = 0, total = 0;
  for (const auto& op : script.ops) {
    const std::size_t code = *catalog.find(op.code);
    const std::uint8_t want = op.action == Action::deactivate ? 0 : 1;
    for (std::size_t i = op.begin; i < op.end; ++i) {
      hits += reparsed.at(i, code) == want;
      ++total;
    }
  }
  r.code_recovery = double(hits) / double(total);
  return r;
}

}  // namespace pgr2m::edit
