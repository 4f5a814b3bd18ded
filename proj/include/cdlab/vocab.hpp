#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cdlab {

using TokenId = std::uint32_t;

/// Bijective token <-> id map. Ids 0..2 are reserved and never move.
class Vocab {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kAlpha = 1;
  static constexpr TokenId kOmega = 2;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kAlphaToken = "ALPHA";
  static constexpr std::string_view kOmegaToken = "OMEGA";

  Vocab() {
    add(std::string(kUnkToken));
    add(std::string(kAlphaToken));
    add(std::string(kOmegaToken));
  }

  /// Rebuilds from an id-ordered token list (as stored in a sidecar).
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 3 || tokens[kUnk] != kUnkToken || tokens[kAlpha] != kAlphaToken ||
        tokens[kOmega] != kOmegaToken)
      throw std::invalid_argument("vocab: reserved tokens missing or out of place");
    Vocab v;
    for (std::size_t i = 3; i < tokens.size(); ++i) {
      if (v.contains(tokens[i])) throw std::invalid_argument("vocab: duplicate token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  /// Vocabulary of a synthetic corpus: reserved ids followed by t0..t{sigma-1}.
  static Vocab synthetic(std::size_t sigma_size) {
    Vocab v;
    for (std::size_t i = 0; i < sigma_size; ++i) v.add(symbol_name(i));
    return v;
  }

  static std::string symbol_name(std::size_t i) { return "t" + std::to_string(i); }

  /// Id of background symbol i in a synthetic vocabulary.
  static TokenId symbol_id(std::size_t i) { return static_cast<TokenId>(3 + i); }

  TokenId add(const std::string& token) {
    if (auto it = ids_.find(token); it != ids_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  /// Unknown tokens map to kUnk.
  TokenId id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace cdlab
