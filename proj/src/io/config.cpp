#include "pgr2m/io/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "pgr2m/error.hpp"

namespace pgr2m {

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed is stored as a size_t field");
using Field = std::variant<std::size_t Config::*, double Config::*, bool Config::*,
                           std::string Config::*>;

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      {"seed", &Config::seed},
      {"stride", &Config::stride},
      {"stages", &Config::stages},
      {"residual_codes", &Config::residual_codes},
      {"latent_dim", &Config::latent_dim},
      {"key_dim", &Config::key_dim},
      {"enc_width", &Config::enc_width},
      {"enc_blocks", &Config::enc_blocks},
      {"quantizer", &Config::quantizer},
      {"catalog", &Config::catalog},
      {"tau", &Config::tau},
      {"residual_dropout", &Config::residual_dropout},
      {"beta", &Config::beta},
      {"gamma", &Config::gamma},
      {"window", &Config::window},
      {"batch", &Config::batch},
      {"lr", &Config::lr},
      {"warmup", &Config::warmup},
      {"tokenizer_steps", &Config::tokenizer_steps},
      {"eval_every", &Config::eval_every},
      {"grad_clip", &Config::grad_clip},
      {"layers", &Config::layers},
      {"heads", &Config::heads},
      {"mlp_ratio", &Config::mlp_ratio},
      {"text_slots", &Config::text_slots},
      {"max_steps", &Config::max_steps},
      {"positions", &Config::positions},
      {"base_steps", &Config::base_steps},
      {"refine_steps", &Config::refine_steps},
      {"predictor_batch", &Config::predictor_batch},
      {"predictor_lr", &Config::predictor_lr},
      {"predictor_warmup", &Config::predictor_warmup},
      {"temperature", &Config::temperature},
  };
  return f;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return &f;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !in.eof() || (std::is_unsigned_v<T> && v.find('-') != std::string::npos)) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
  }
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& raw) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key '" + key + "'");
  std::string v = trim(raw);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
          this->*member = v;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (v == "true") this->*member = true;
          else if (v == "false") this->*member = false;
          else throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
        } else {
          this->*member = parse_number<T>(key, v);
        }
      },
      *f);
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string Config::to_text() const {
  std::ostringstream out;
  const nlohmann::json j = to_json();
  for (const auto& [name, f] : fields()) {
    const auto& v = j.at(name);
    out << name << " = " << (v.is_string() ? "\"" + v.get<std::string>() + "\"" : v.dump()) << "\n";
  }
  return out.str();
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, f] : fields()) {
    std::visit([&](auto member) { j[name] = this->*member; }, f);
  }
  return j;
}

Config Config::from_json(const nlohmann::json& j) {
  Config c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Field* f = find_field(it.key());
    if (!f) throw ConfigError("unknown key '" + it.key() + "'");
    try {
      std::visit(
          [&](auto member) {
            using T = std::remove_reference_t<decltype(c.*member)>;
            c.*member = it.value().get<T>();
          },
          *f);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("key '" + it.key() + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

void Config::validate() const {
  auto positive = [](const char* key, std::size_t v) {
    if (v == 0) throw ConfigError(std::string("'") + key + "' must be positive");
  };
  positive("stride", stride);
  positive("stages", stages);
  positive("residual_codes", residual_codes);
  positive("latent_dim", latent_dim);
  positive("key_dim", key_dim);
  positive("enc_width", enc_width);
  positive("window", window);
  positive("batch", batch);
  positive("layers", layers);
  positive("heads", heads);
  positive("mlp_ratio", mlp_ratio);
  positive("text_slots", text_slots);
  positive("max_steps", max_steps);
  positive("predictor_batch", predictor_batch);
  if (stride != 4) throw ConfigError("'stride' must be 4 (two stride-2 levels)");
  if (window % stride != 0) throw ConfigError("'window' must be a multiple of 'stride'");
  if (latent_dim % heads != 0) throw ConfigError("'latent_dim' must be divisible by 'heads'");
  if (quantizer != "attention" && quantizer != "distance") {
    throw ConfigError("'quantizer' must be attention or distance, got '" + quantizer + "'");
  }
  if (tau < 0.0 || tau > 1.0) throw ConfigError("'tau' must lie in [0, 1]");
  if (!(lr > 0.0) || !(predictor_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(temperature > 0.0)) throw ConfigError("'temperature' must be positive");
}

const std::vector<std::string>& structural_keys() {
  static const std::vector<std::string> keys = {"stride",    "stages",     "residual_codes", "latent_dim", "key_dim",
                                                "enc_width", "enc_blocks", "quantizer",      "layers",     "heads",
                                                "mlp_ratio", "text_slots", "max_steps",      "positions"};
  return keys;
}

void require_structural_match(const Config& checkpoint, const Config& runtime, const std::string& what) {
  const auto a = checkpoint.to_json(), b = runtime.to_json();
  for (const auto& k : structural_keys()) {
    if (a.at(k) != b.at(k)) {
      throw ValidationError(what + ": structural key '" + k + "' is " + a.at(k).dump() + " in the checkpoint but " +
                            b.at(k).dump() + " at runtime");
    }
  }
}

}  // namespace pgr2m
