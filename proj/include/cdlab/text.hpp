// Plain-text corpora for the English language model: whitespace tokens,
// ASCII-lowercased, one end-of-line marker per non-empty line.
#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdlab/conllu.hpp"
#include "cdlab/vocab.hpp"

namespace cdlab {

inline constexpr std::string_view kEolToken = "<eos>";

inline std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line, word;
  while (std::getline(in, line)) {
    std::istringstream ws(line);
    bool any = false;
    while (ws >> word) {
      out.push_back(ascii_lower(word));
      any = true;
    }
    if (any) out.emplace_back(kEolToken);
  }
  return out;
}

/// The `max_size` most frequent words (ties broken alphabetically) after the
/// reserved ids. Words seen fewer than `min_count` times are left out.
inline Vocab build_vocab(const std::vector<std::string>& words, std::size_t max_size, std::size_t min_count = 1) {
  std::map<std::string, std::size_t> counts;
  for (const auto& w : words) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [w, c] : ranked) {
    if (v.size() >= max_size) break;
    if (c < min_count) break;
    v.add(w);
  }
  return v;
}

inline std::vector<TokenId> encode_words(const std::vector<std::string>& words, const Vocab& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

}  // namespace cdlab
