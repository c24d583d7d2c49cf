#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pgr2m/numerics/module.hpp"

// Toy text conditioner: hashed word embeddings stand in for a pretrained
// sentence encoder, hashed keyword embeddings for generated keywords.
namespace pgr2m::pred {

using nn::Tape;
using nn::Tensor;
using nn::Var;

inline constexpr std::size_t kKeywordSlots = 11;  // 10 body-part keywords + 1 emotion
inline constexpr std::size_t kTextTokens = 1 + kKeywordSlots;

std::uint64_t fnv1a(std::string_view s);
// Lowercased whitespace-separated words.
std::vector<std::string> caption_words(std::string_view caption);

// Hash-slot form of a caption/keyword pair; keyword slot 0 is the null keyword.
struct TextInput {
  std::vector<std::size_t> words;
  std::array<std::size_t, kKeywordSlots> keywords{};
};

// ValidationError on an empty caption or more than 11 keywords.
TextInput text_input(std::string_view caption, const std::vector<std::string>& keywords, std::size_t slots);

struct TextEmbedder {
  const nn::Parameter* words = nullptr;     // [slots, D]
  const nn::Parameter* keywords = nullptr;  // [slots, D], row 0 is the null keyword
  const nn::Parameter* slot = nullptr;      // [12, D], one per text token position
  std::size_t slots = 0;

  static TextEmbedder make(nn::ParamStore& ps, const std::string& name, std::size_t slots, std::size_t dim,
                           nn::Rng& rng);
  // [B, 12, D]: sentence embedding then the 11 keyword embeddings.
  Var operator()(Tape& t, const std::vector<TextInput>& texts) const;
};

}  // namespace pgr2m::pred
