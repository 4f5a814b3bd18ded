// Synthetic long-range rule corpora.
//
// A corpus is a uniform stream over the background alphabet with n planted
// instances of the rule  ALPHA q OMEGA, where q is a conduit of k background
// symbols. In the familiar setting every conduit of the bank is additionally
// planted outside_occurrences times on its own.
//
// Placement: the background is drawn for the full corpus length first, then
// every planted span overwrites a slot reserved up front. Slots are chosen by
// a uniform random arrangement of the spans among the free background tokens
// (selection sampling over the F + m arrangement positions, F = free tokens,
// m = spans), so spans never overlap and the length is exact.
//
// Seeds derived from SynthSpec::seed:
//   "background"   background symbols
//   "bank"         conduit bank
//   "rules"        assignment of bank conduits to rules
//   "placement"    span arrangement
//   "test-in", "test-out"   test corpora
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdlab/checkpoint.hpp"
#include "cdlab/rng.hpp"
#include "cdlab/vocab.hpp"

namespace cdlab {

enum class Setting { Unfamiliar, Familiar };

inline std::string to_string(Setting s) { return s == Setting::Familiar ? "familiar" : "unfamiliar"; }

inline Setting setting_from_string(const std::string& s) {
  if (s == "familiar") return Setting::Familiar;
  if (s == "unfamiliar") return Setting::Unfamiliar;
  throw std::invalid_argument("unknown setting '" + s + "' (expected familiar or unfamiliar)");
}

using Conduit = std::vector<TokenId>;

struct SynthSpec {
  std::size_t sigma_size = 1000;
  std::size_t corpus_len = 1'000'000;
  std::size_t n_rules = 1000;
  std::size_t conduit_len = 4;
  Setting setting = Setting::Unfamiliar;
  std::size_t bank_size = 100;
  std::size_t in_rule_repeats = 10;
  std::size_t outside_occurrences = 1000;
  std::size_t test_rules = 100;
  std::size_t test_len = 50'000;
  std::uint64_t seed = 1;

  /// Rules draw from a repeated bank when bank_size * in_rule_repeats == n_rules;
  /// otherwise every rule gets a fresh uniform conduit (unfamiliar only).
  bool uses_bank() const { return bank_size * in_rule_repeats == n_rules && n_rules > 0; }

  std::size_t planted_tokens() const {
    std::size_t total = n_rules * (conduit_len + 2);
    if (setting == Setting::Familiar) total += bank_size * outside_occurrences * conduit_len;
    return total;
  }

  void validate() const {
    if (sigma_size == 0) throw std::invalid_argument("synthetic corpus: empty background alphabet");
    if (conduit_len == 0) throw std::invalid_argument("synthetic corpus: conduit length must be >= 1");
    if (setting == Setting::Familiar && !uses_bank())
      throw std::invalid_argument("synthetic corpus: familiar setting needs bank_size * in_rule_repeats == n_rules");
    if (planted_tokens() > corpus_len)
      throw std::invalid_argument("synthetic corpus: infeasible packing, " + std::to_string(planted_tokens()) +
                                  " planted tokens exceed corpus length " + std::to_string(corpus_len));
    if (test_rules * (conduit_len + 2) > test_len)
      throw std::invalid_argument("synthetic corpus: infeasible test packing");
  }

  bool operator==(const SynthSpec&) const = default;
};

struct RulePosition {
  std::size_t alpha = 0;
  std::size_t omega = 0;

  bool operator==(const RulePosition&) const = default;
};

struct Span {
  std::size_t start = 0;
  std::size_t length = 0;
};

struct SynthCorpus {
  std::vector<TokenId> tokens;
  std::vector<RulePosition> rules;
  std::vector<Conduit> conduit_bank;
  std::vector<Span> planted;
};

namespace detail {

inline Conduit random_conduit(Rng& rng, std::size_t sigma, std::size_t k) {
  Conduit q(k);
  for (auto& t : q) t = Vocab::symbol_id(static_cast<std::size_t>(rng.below(sigma)));
  return q;
}

inline std::vector<Conduit> random_bank(Rng& rng, std::size_t sigma, std::size_t k, std::size_t size) {
  double space = 1.0;
  for (std::size_t i = 0; i < k; ++i) space *= static_cast<double>(sigma);
  if (static_cast<double>(size) > space) throw std::invalid_argument("synth: bank larger than |sigma|^k");
  std::set<Conduit> seen;
  std::vector<Conduit> bank;
  while (bank.size() < size) {
    Conduit q = random_conduit(rng, sigma, k);
    if (seen.insert(q).second) bank.push_back(std::move(q));
  }
  return bank;
}

// Writes `spans` (already ordered) into `tokens` at a uniformly random
// non-overlapping arrangement. Returns each span's start offset.
inline std::vector<std::size_t> place_spans(std::vector<TokenId>& tokens, const std::vector<std::vector<TokenId>>& spans,
                                            Rng& rng) {
  std::size_t planted = 0;
  for (const auto& s : spans) planted += s.size();
  if (planted > tokens.size()) throw std::invalid_argument("synth: infeasible packing");
  const std::size_t free_tokens = tokens.size() - planted;
  const std::size_t m = spans.size();
  const std::size_t slots = free_tokens + m;

  std::vector<std::size_t> starts;
  starts.reserve(m);
  std::size_t pos = 0;
  std::size_t needed = m;
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < slots; ++slot) {
    const std::size_t remaining = slots - slot;
    // select with probability needed / remaining
    if (needed > 0 && rng.below(remaining) < needed) {
      const auto& s = spans[next++];
      std::copy(s.begin(), s.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
      starts.push_back(pos);
      pos += s.size();
      --needed;
    } else {
      ++pos;
    }
  }
  return starts;
}

inline std::vector<TokenId> background(std::size_t len, std::size_t sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenId> t(len);
  for (auto& x : t) x = Vocab::symbol_id(static_cast<std::size_t>(rng.below(sigma)));
  return t;
}

inline std::vector<TokenId> rule_span(const Conduit& q) {
  std::vector<TokenId> s;
  s.reserve(q.size() + 2);
  s.push_back(Vocab::kAlpha);
  s.insert(s.end(), q.begin(), q.end());
  s.push_back(Vocab::kOmega);
  return s;
}

// Plants rules built from `rule_conduits` and optional bare conduit spans.
inline SynthCorpus assemble(std::vector<TokenId> tokens, const std::vector<Conduit>& rule_conduits,
                            const std::vector<Conduit>& bare_conduits, std::uint64_t placement_seed) {
  struct Item {
    std::vector<TokenId> span;
    bool is_rule;
  };
  std::vector<Item> items;
  items.reserve(rule_conduits.size() + bare_conduits.size());
  for (const auto& q : rule_conduits) items.push_back({rule_span(q), true});
  for (const auto& q : bare_conduits) items.push_back({q, false});
  Rng rng(placement_seed);
  rng.shuffle(items);

  std::vector<std::vector<TokenId>> spans;
  spans.reserve(items.size());
  for (auto& it : items) spans.push_back(it.span);
  const auto starts = place_spans(tokens, spans, rng);

  SynthCorpus out;
  out.tokens = std::move(tokens);
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.planted.push_back({starts[i], items[i].span.size()});
    if (items[i].is_rule) out.rules.push_back({starts[i], starts[i] + items[i].span.size() - 1});
  }
  std::sort(out.rules.begin(), out.rules.end(), [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
  std::sort(out.planted.begin(), out.planted.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  return out;
}

}  // namespace detail

inline SynthCorpus gen_train(const SynthSpec& spec) {
  spec.validate();
  const std::size_t k = spec.conduit_len;
  std::vector<Conduit> bank;
  std::vector<Conduit> rule_conduits;
  if (spec.uses_bank()) {
    Rng bank_rng(derive_seed(spec.seed, "bank"));
    bank = detail::random_bank(bank_rng, spec.sigma_size, k, spec.bank_size);
    for (const auto& q : bank)
      for (std::size_t r = 0; r < spec.in_rule_repeats; ++r) rule_conduits.push_back(q);
    Rng rules_rng(derive_seed(spec.seed, "rules"));
    rules_rng.shuffle(rule_conduits);
  } else {
    Rng rules_rng(derive_seed(spec.seed, "rules"));
    for (std::size_t r = 0; r < spec.n_rules; ++r)
      rule_conduits.push_back(detail::random_conduit(rules_rng, spec.sigma_size, k));
    std::set<Conduit> distinct(rule_conduits.begin(), rule_conduits.end());
    bank.assign(distinct.begin(), distinct.end());
  }

  std::vector<Conduit> bare;
  if (spec.setting == Setting::Familiar)
    for (const auto& q : bank)
      for (std::size_t r = 0; r < spec.outside_occurrences; ++r) bare.push_back(q);

  auto tokens = detail::background(spec.corpus_len, spec.sigma_size, derive_seed(spec.seed, "background"));
  SynthCorpus out = detail::assemble(std::move(tokens), rule_conduits, bare, derive_seed(spec.seed, "placement"));
  out.conduit_bank = std::move(bank);
  return out;
}

struct TestSets {
  SynthCorpus in_domain;
  SynthCorpus out_domain;
};

/// In-domain rules draw conduits from the training bank; out-domain rules use
/// fresh uniform conduits. Both sets have spec.test_rules rules in
/// spec.test_len tokens.
inline TestSets gen_tests(const SynthSpec& spec, const SynthCorpus& train) {
  spec.validate();
  if (train.conduit_bank.empty()) throw std::invalid_argument("gen_tests: training corpus has no conduits");
  const std::size_t k = spec.conduit_len;
  for (const auto& q : train.conduit_bank)
    if (q.size() != k) throw std::invalid_argument("gen_tests: training conduits do not match spec conduit length");

  TestSets out;
  {
    Rng rng(derive_seed(spec.seed, "test-in"));
    std::vector<Conduit> rules;
    for (std::size_t r = 0; r < spec.test_rules; ++r)
      rules.push_back(train.conduit_bank[static_cast<std::size_t>(rng.below(train.conduit_bank.size()))]);
    auto bg = detail::background(spec.test_len, spec.sigma_size, derive_seed(spec.seed, "test-in-background"));
    out.in_domain = detail::assemble(std::move(bg), rules, {}, derive_seed(spec.seed, "test-in-placement"));
    out.in_domain.conduit_bank = train.conduit_bank;
  }
  {
    Rng rng(derive_seed(spec.seed, "test-out"));
    std::vector<Conduit> rules;
    for (std::size_t r = 0; r < spec.test_rules; ++r) rules.push_back(detail::random_conduit(rng, spec.sigma_size, k));
    auto bg = detail::background(spec.test_len, spec.sigma_size, derive_seed(spec.seed, "test-out-background"));
    out.out_domain = detail::assemble(std::move(bg), rules, {}, derive_seed(spec.seed, "test-out-placement"));
    std::set<Conduit> distinct(rules.begin(), rules.end());
    out.out_domain.conduit_bank.assign(distinct.begin(), distinct.end());
  }
  return out;
}

struct GridPoint {
  std::size_t n = 0;
  std::size_t k = 0;
  SynthSpec spec;
  SynthCorpus corpus;
};

struct Grid {
  std::vector<GridPoint> points;
  std::vector<std::string> skipped;
};

/// One unfamiliar corpus per (n, k). Every point shares the base background
/// seed; rule conduits and placement use seeds derived from (n, k).
inline Grid gen_grid(const SynthSpec& base, const std::vector<std::size_t>& n_values,
                     const std::vector<std::size_t>& k_values) {
  Grid grid;
  for (std::size_t n : n_values) {
    for (std::size_t k : k_values) {
      SynthSpec s = base;
      s.setting = Setting::Unfamiliar;
      s.n_rules = n;
      s.conduit_len = k;
      s.bank_size = n;
      s.in_rule_repeats = 1;
      try {
        s.validate();
      } catch (const std::invalid_argument& e) {
        grid.skipped.push_back("n=" + std::to_string(n) + " k=" + std::to_string(k) + ": " + e.what());
        continue;
      }
      const std::string label = "grid n=" + std::to_string(n) + " k=" + std::to_string(k);
      std::vector<Conduit> rules;
      Rng rng(derive_seed(base.seed, label + " rules"));
      for (std::size_t r = 0; r < n; ++r) rules.push_back(detail::random_conduit(rng, s.sigma_size, k));
      auto bg = detail::background(s.corpus_len, s.sigma_size, derive_seed(base.seed, "background"));
      SynthCorpus c = detail::assemble(std::move(bg), rules, {}, derive_seed(base.seed, label + " placement"));
      c.conduit_bank = rules;
      grid.points.push_back({n, k, s, std::move(c)});
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Audits

struct CorpusAudit {
  bool length_ok = false;
  std::size_t alpha_count = 0;
  std::size_t omega_count = 0;
  bool spans_disjoint = false;
  bool rules_well_formed = false;
  bool markers_only_in_rules = false;
  /// Contiguous occurrences of each bank conduit (familiar corpora).
  std::vector<std::size_t> conduit_counts;

  bool ok() const { return length_ok && spans_disjoint && rules_well_formed && markers_only_in_rules; }
};

/// Counts of every length-k window, keyed by the window's tokens.
inline std::map<Conduit, std::size_t> kgram_counts(std::span<const TokenId> tokens, std::size_t k,
                                                   const std::set<Conduit>& wanted) {
  std::map<Conduit, std::size_t> counts;
  for (const auto& q : wanted) counts[q] = 0;
  if (tokens.size() < k) return counts;
  Conduit window(k);
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
    std::copy(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + k),
              window.begin());
    auto it = counts.find(window);
    if (it != counts.end()) ++it->second;
  }
  return counts;
}

inline CorpusAudit audit_corpus(const SynthCorpus& c, std::size_t expected_len, std::size_t k) {
  CorpusAudit a;
  a.length_ok = c.tokens.size() == expected_len;
  for (TokenId t : c.tokens) {
    a.alpha_count += t == Vocab::kAlpha;
    a.omega_count += t == Vocab::kOmega;
  }
  a.spans_disjoint = true;
  for (std::size_t i = 0; i < c.planted.size(); ++i) {
    if (c.planted[i].start + c.planted[i].length > c.tokens.size()) a.spans_disjoint = false;
    if (i > 0 && c.planted[i - 1].start + c.planted[i - 1].length > c.planted[i].start) a.spans_disjoint = false;
  }
  a.rules_well_formed = true;
  std::set<std::size_t> marker_positions;
  for (const auto& r : c.rules) {
    if (r.omega != r.alpha + k + 1 || r.omega >= c.tokens.size() || c.tokens[r.alpha] != Vocab::kAlpha ||
        c.tokens[r.omega] != Vocab::kOmega) {
      a.rules_well_formed = false;
      continue;
    }
    for (std::size_t j = r.alpha + 1; j < r.omega; ++j)
      if (c.tokens[j] < 3) a.rules_well_formed = false;
    marker_positions.insert(r.alpha);
    marker_positions.insert(r.omega);
  }
  a.markers_only_in_rules = marker_positions.size() == a.alpha_count + a.omega_count &&
                            a.alpha_count == c.rules.size() && a.omega_count == c.rules.size();
  std::set<Conduit> wanted(c.conduit_bank.begin(), c.conduit_bank.end());
  const auto counts = kgram_counts(c.tokens, k, wanted);
  for (const auto& q : c.conduit_bank) a.conduit_counts.push_back(counts.at(q));
  return a;
}

// ---------------------------------------------------------------------------
// I/O

inline std::string tokens_to_text(std::span<const TokenId> tokens, const Vocab& vocab, std::size_t per_line = 1000) {
  std::string out;
  out.reserve(tokens.size() * 5);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out += vocab.token(tokens[i]);
    out += ((i + 1) % per_line == 0 || i + 1 == tokens.size()) ? '\n' : ' ';
  }
  return out;
}

/// Whitespace-separated tokens; unknown strings map to <unk>.
inline std::vector<TokenId> text_to_tokens(const std::string& text, const Vocab& vocab) {
  std::vector<TokenId> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(vocab.id(tok));
  return out;
}

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"sigma_size", s.sigma_size},
          {"corpus_len", s.corpus_len},
          {"n_rules", s.n_rules},
          {"conduit_len", s.conduit_len},
          {"setting", to_string(s.setting)},
          {"bank_size", s.bank_size},
          {"in_rule_repeats", s.in_rule_repeats},
          {"outside_occurrences", s.outside_occurrences},
          {"test_rules", s.test_rules},
          {"test_len", s.test_len},
          {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec s = {}) {
  s.sigma_size = j.value("sigma_size", s.sigma_size);
  s.corpus_len = j.value("corpus_len", s.corpus_len);
  s.n_rules = j.value("n_rules", s.n_rules);
  s.conduit_len = j.value("conduit_len", s.conduit_len);
  if (j.contains("setting")) s.setting = setting_from_string(j.at("setting").get<std::string>());
  s.bank_size = j.value("bank_size", s.bank_size);
  s.in_rule_repeats = j.value("in_rule_repeats", s.in_rule_repeats);
  s.outside_occurrences = j.value("outside_occurrences", s.outside_occurrences);
  s.test_rules = j.value("test_rules", s.test_rules);
  s.test_len = j.value("test_len", s.test_len);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline nlohmann::json corpus_metadata(const SynthSpec& spec, const SynthCorpus& c) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : c.rules) rules.push_back({r.alpha, r.omega});
  nlohmann::json bank = nlohmann::json::array();
  for (const auto& q : c.conduit_bank) bank.push_back(q);
  return {{"spec", to_json(spec)}, {"length", c.tokens.size()}, {"rule_positions", rules}, {"conduit_bank", bank}};
}

/// Writes "<path>" (tokens) and "<path>.json" (metadata).
inline void write_corpus(const std::filesystem::path& path, const SynthSpec& spec, const SynthCorpus& c) {
  const Vocab vocab = Vocab::synthetic(spec.sigma_size);
  write_file(path, tokens_to_text(c.tokens, vocab));
  write_file(sidecar_path(path), corpus_metadata(spec, c).dump() + "\n");
}

inline SynthCorpus read_corpus(const std::filesystem::path& path, SynthSpec* spec_out = nullptr) {
  const auto meta = nlohmann::json::parse(read_file(sidecar_path(path)));
  const SynthSpec spec = synth_spec_from_json(meta.at("spec"));
  if (spec_out) *spec_out = spec;
  SynthCorpus c;
  c.tokens = text_to_tokens(read_file(path), Vocab::synthetic(spec.sigma_size));
  for (const auto& r : meta.at("rule_positions")) c.rules.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
  for (const auto& q : meta.at("conduit_bank")) c.conduit_bank.push_back(q.get<Conduit>());
  return c;
}

}  // namespace cdlab
