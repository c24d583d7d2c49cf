#include "pgr2m/predictors/text.hpp"

#include <cctype>
#include <sstream>

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"

namespace pgr2m::pred {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> caption_words(std::string_view caption) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : caption) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TextInput text_input(std::string_view caption, const std::vector<std::string>& keywords, std::size_t slots) {
  if (slots < 2) throw ConfigError("text_slots must be at least 2");
  const auto words = caption_words(caption);
  if (words.empty()) throw ValidationError("caption is empty");
  if (keywords.size() > kKeywordSlots) {
    throw ValidationError("at most " + std::to_string(kKeywordSlots) + " keywords, got " + std::to_string(keywords.size()));
  }
  TextInput in;
  for (const auto& w : words) in.words.push_back(fnv1a(w) % slots);
  for (std::size_t k = 0; k < keywords.size(); ++k) in.keywords[k] = 1 + fnv1a(keywords[k]) % (slots - 1);
  return in;
}

TextEmbedder TextEmbedder::make(nn::ParamStore& ps, const std::string& name, std::size_t slots, std::size_t dim,
                                nn::Rng& rng) {
  TextEmbedder e;
  e.slots = slots;
  e.words = &ps.add(name + ".words", nn::randn({slots, dim}, rng, 0.02));
  e.keywords = &ps.add(name + ".keywords", nn::randn({slots, dim}, rng, 0.02));
  e.slot = &ps.add(name + ".slot", nn::randn({kTextTokens, dim}, rng, 0.02));
  return e;
}

Var TextEmbedder::operator()(Tape& t, const std::vector<TextInput>& texts) const {
  const std::size_t B = texts.size(), D = words->value.dim(1);
  std::vector<std::vector<std::size_t>> bags;
  std::vector<long> kw;
  for (const auto& x : texts) {
    bags.push_back(x.words);
    for (auto k : x.keywords) kw.push_back(static_cast<long>(k));
  }
  Var sentence = nn::reshape(nn::embedding_bag_mean(nn::bind(t, *words), bags), {B, 1, D});
  Var keys = nn::reshape(nn::embedding(nn::bind(t, *keywords), kw), {B, kKeywordSlots, D});
  return nn::add_broadcast(nn::concat({sentence, keys}, 1), nn::bind(t, *slot));
}

}  // namespace pgr2m::pred
