/*
 * Copyright (c) 2026 The typodr Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "typodr/common.hpp"
#include "typodr/rng.hpp"

namespace typodr {

enum class TypoKind : std::uint8_t { Insert, Delete, Substitute, NeighborSwap, KeyboardSwap };

inline constexpr std::array<TypoKind, 5> kAllTypoKinds = {
    TypoKind::Insert, TypoKind::Delete, TypoKind::Substitute, TypoKind::NeighborSwap,
    TypoKind::KeyboardSwap};

inline const char* to_string(TypoKind k) {
  switch (k) {
    case TypoKind::Insert: return "insert";
    case TypoKind::Delete: return "delete";
    case TypoKind::Substitute: return "substitute";
    case TypoKind::NeighborSwap: return "neighbor_swap";
    case TypoKind::KeyboardSwap: return "keyboard_swap";
  }
  return "?";
}

inline constexpr std::string_view kTypoAlphabet = "abcdefghijklmnopqrstuvwxyz";

// US QWERTY letter adjacency on an unstaggered grid:
//   row 0: q w e r t y u i o p
//   row 1: a s d f g h j k l
//   row 2: z x c v b n m
// Keys (r, i) and (r', i') are adjacent when they sit next to each other in
// the same row, or in neighbouring rows with |i - i'| <= 1. Neighbours are
// ordered: left, right, row above (left to right), row below (left to right).
class KeyboardLayout {
 public:
  static const KeyboardLayout& qwerty() {
    static const KeyboardLayout layout;
    return layout;
  }

  const std::vector<char>& neighbors(char c) const {
    static const std::vector<char> none;
    c = ascii_lower(c);
    if (c < 'a' || c > 'z') return none;
    return adjacency_[static_cast<std::size_t>(c - 'a')];
  }

  bool has_key(char c) const { return !neighbors(c).empty(); }

 private:
  KeyboardLayout() {
    static constexpr std::array<std::string_view, 3> rows = {"qwertyuiop", "asdfghjkl",
                                                             "zxcvbnm"};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t i = 0; i < rows[r].size(); ++i) {
        auto& adj = adjacency_[static_cast<std::size_t>(rows[r][i] - 'a')];
        if (i > 0) adj.push_back(rows[r][i - 1]);
        if (i + 1 < rows[r].size()) adj.push_back(rows[r][i + 1]);
        auto add_row = [&](std::string_view other) {
          for (std::size_t j = (i == 0 ? 0 : i - 1); j <= i + 1 && j < other.size(); ++j)
            adj.push_back(other[j]);
        };
        if (r > 0) add_row(rows[r - 1]);
        if (r + 1 < rows.size()) add_row(rows[r + 1]);
      }
    }
  }

  std::array<std::vector<char>, 26> adjacency_{};
};

struct AugmentationPolicy {
  std::size_t k = 40;
  std::size_t min_word_len = 3;
  std::size_t transforms_per_variant = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (min_word_len < 3) throw InvalidInput("augmentation: min_word_len must be >= 3");
    if (transforms_per_variant < 1)
      throw InvalidInput("augmentation: transforms_per_variant must be >= 1");
  }
};

namespace detail {

inline bool is_letter(char c) { return c >= 'a' && c <= 'z'; }

// Substitution candidates exclude the current character so the edit is real.
inline std::string substitute_candidates(char current) {
  std::string out;
  for (char c : kTypoAlphabet)
    if (c != current) out.push_back(c);
  return out;
}

}  // namespace detail

// Number of distinct replacement choices accepted by apply_transform for the
// given kind at `position` of `text` (1 for kinds that take no choice).
inline std::size_t replacement_choices(std::string_view text, TypoKind kind, std::size_t position) {
  switch (kind) {
    case TypoKind::Insert: return kTypoAlphabet.size();
    case TypoKind::Substitute:
      return detail::substitute_candidates(ascii_lower(text[position])).size();
    case TypoKind::KeyboardSwap: return KeyboardLayout::qwerty().neighbors(text[position]).size();
    default: return 1;
  }
}

// Applies one character-level edit. The result is always at Damerau-Levenshtein
// distance exactly 1 from `text`, so edits that would be no-ops (swapping two
// equal characters, keyboard-swapping a non-letter) are rejected. For
// Substitute, `choice` indexes a-z with the current character removed.
inline std::string apply_transform(std::string_view text, TypoKind kind, std::size_t position,
                                   std::size_t choice = 0) {
  if (text.empty()) throw InvalidInput("apply_transform: empty text");
  const std::size_t len = text.size();
  std::string out(text);
  auto bad_pos = [&] {
    return InvalidInput("apply_transform: position " + std::to_string(position) +
                        " invalid for " + to_string(kind) + " on length " + std::to_string(len));
  };
  auto bad_choice = [&](std::size_t n) {
    return InvalidInput("apply_transform: choice " + std::to_string(choice) + " out of range [0, " +
                        std::to_string(n) + ") for " + to_string(kind));
  };
  switch (kind) {
    case TypoKind::Insert: {
      if (position > len) throw bad_pos();
      if (choice >= kTypoAlphabet.size()) throw bad_choice(kTypoAlphabet.size());
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(position), kTypoAlphabet[choice]);
      return out;
    }
    case TypoKind::Delete: {
      if (position >= len) throw bad_pos();
      out.erase(position, 1);
      return out;
    }
    case TypoKind::Substitute: {
      if (position >= len) throw bad_pos();
      const auto cands = detail::substitute_candidates(ascii_lower(text[position]));
      if (choice >= cands.size()) throw bad_choice(cands.size());
      out[position] = cands[choice];
      return out;
    }
    case TypoKind::NeighborSwap: {
      if (len < 2 || position >= len - 1) throw bad_pos();
      if (text[position] == text[position + 1])
        throw InvalidInput("apply_transform: neighbor swap of identical characters is a no-op");
      std::swap(out[position], out[position + 1]);
      return out;
    }
    case TypoKind::KeyboardSwap: {
      if (position >= len) throw bad_pos();
      const auto& adj = KeyboardLayout::qwerty().neighbors(text[position]);
      if (adj.empty())
        throw InvalidInput("apply_transform: no keyboard neighbours for character at position " +
                           std::to_string(position));
      if (choice >= adj.size()) throw bad_choice(adj.size());
      out[position] = adj[choice];
      return out;
    }
  }
  throw InvalidInput("apply_transform: unknown kind");
}

// Positions inside `word` where `kind` yields a genuine edit.
inline std::vector<std::size_t> valid_positions(std::string_view word, TypoKind kind) {
  std::vector<std::size_t> pos;
  const std::size_t len = word.size();
  switch (kind) {
    case TypoKind::Insert:
      for (std::size_t i = 0; i <= len; ++i) pos.push_back(i);
      break;
    case TypoKind::Delete:
    case TypoKind::Substitute:
      for (std::size_t i = 0; i < len; ++i) pos.push_back(i);
      break;
    case TypoKind::NeighborSwap:
      for (std::size_t i = 0; i + 1 < len; ++i)
        if (word[i] != word[i + 1]) pos.push_back(i);
      break;
    case TypoKind::KeyboardSwap:
      for (std::size_t i = 0; i < len; ++i)
        if (KeyboardLayout::qwerty().has_key(word[i])) pos.push_back(i);
      break;
  }
  return pos;
}

struct Augmentation {
  std::vector<std::string> variants;
  // Set when the query had no word long enough to corrupt.
  bool no_op_warning = false;
};

struct TypoDraw {
  std::size_t word_index;  // index among whitespace-delimited words
  TypoKind kind;
  std::size_t position;  // within the word
  std::size_t choice;
};

namespace detail {

// One seeded edit on the given word list. Kinds with no valid position in the
// chosen word (e.g. a swap in "aaa") are redrawn.
inline TypoDraw draw_typo(std::vector<std::string>& words, const std::vector<std::size_t>& eligible,
                          SplitMix64& rng) {
  const std::size_t wi = eligible[rng.uniform_index(eligible.size())];
  auto& word = words[wi];
  for (;;) {
    const TypoKind kind = kAllTypoKinds[rng.uniform_index(kAllTypoKinds.size())];
    const auto positions = valid_positions(word, kind);
    if (positions.empty()) continue;
    const std::size_t pos = positions[rng.uniform_index(positions.size())];
    const std::size_t n = replacement_choices(word, kind, pos);
    const std::size_t choice = n > 1 ? rng.uniform_index(n) : 0;
    word = apply_transform(word, kind, pos, choice);
    return {wi, kind, pos, choice};
  }
}

}  // namespace detail

// Produces policy.k typoed variants of `query`. The query is lowercased and
// re-joined with single spaces; each variant applies transforms_per_variant
// edits to uniformly chosen words of length >= min_word_len. Variant v is
// drawn from its own SplitMix64 stream seeded by derive_seed(policy.seed, {v}).
// `draws`, when given, receives the edits in order.
inline Augmentation generate_variants(std::string_view query, const AugmentationPolicy& policy,
                                      std::vector<TypoDraw>* draws = nullptr) {
  policy.validate();
  Augmentation out;
  const std::string lowered = to_lower(query);
  std::vector<std::string> words;
  for (auto w : split_whitespace(lowered)) words.emplace_back(w);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i].size() >= policy.min_word_len) eligible.push_back(i);

  if (eligible.empty()) {
    out.no_op_warning = true;
    out.variants.assign(policy.k, std::string(query));
    return out;
  }

  out.variants.reserve(policy.k);
  for (std::size_t v = 0; v < policy.k; ++v) {
    SplitMix64 rng(derive_seed(policy.seed, {v}));
    auto typoed = words;
    for (std::size_t t = 0; t < policy.transforms_per_variant; ++t) {
      auto d = detail::draw_typo(typoed, eligible, rng);
      if (draws) draws->push_back(d);
    }
    std::string joined;
    for (std::size_t i = 0; i < typoed.size(); ++i) {
      if (i) joined.push_back(' ');
      joined += typoed[i];
    }
    out.variants.push_back(std::move(joined));
  }
  return out;
}

}  // namespace typodr
