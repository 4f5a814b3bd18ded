#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "cdlab/checkpoint.hpp"
#include "cdlab/synth.hpp"

using namespace cdlab;

namespace {

SynthSpec small_spec(Setting setting) {
  SynthSpec s;
  s.sigma_size = 50;
  s.corpus_len = 20000;
  s.n_rules = 100;
  s.conduit_len = 3;
  s.setting = setting;
  s.bank_size = 10;
  s.in_rule_repeats = 10;
  s.outside_occurrences = 100;
  s.test_rules = 20;
  s.test_len = 2000;
  s.seed = 7;
  return s;
}

// Naive scan, independent of the map-based counter in the library.
std::size_t count_occurrences(const std::vector<TokenId>& hay, const Conduit& needle) {
  std::size_t n = 0;
  auto it = hay.begin();
  while ((it = std::search(it, hay.end(), needle.begin(), needle.end())) != hay.end()) {
    ++n;
    ++it;
  }
  return n;
}

}  // namespace

TEST(SynthSpec, Validation) {
  EXPECT_NO_THROW(small_spec(Setting::Familiar).validate());
  auto s = small_spec(Setting::Familiar);
  s.bank_size = 9;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec(Setting::Unfamiliar);
  s.corpus_len = 100;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec(Setting::Unfamiliar);
  s.conduit_len = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(setting_from_string("both"), std::invalid_argument);
}

TEST(GenTrain, UnfamiliarPassesAudit) {
  const auto spec = small_spec(Setting::Unfamiliar);
  const auto c = gen_train(spec);
  const auto a = audit_corpus(c, spec.corpus_len, spec.conduit_len);
  EXPECT_TRUE(a.ok());
  EXPECT_EQ(a.alpha_count, spec.n_rules);
  EXPECT_EQ(a.omega_count, spec.n_rules);
  EXPECT_EQ(c.rules.size(), spec.n_rules);
  for (std::size_t i = 0; i < c.conduit_bank.size(); ++i) EXPECT_GE(a.conduit_counts[i], spec.in_rule_repeats);
}

TEST(GenTrain, FamiliarConduitsRecurOutsideRules) {
  const auto spec = small_spec(Setting::Familiar);
  const auto c = gen_train(spec);
  const auto a = audit_corpus(c, spec.corpus_len, spec.conduit_len);
  EXPECT_TRUE(a.ok());
  ASSERT_EQ(c.conduit_bank.size(), spec.bank_size);
  for (std::size_t i = 0; i < c.conduit_bank.size(); ++i) {
    const std::size_t naive = count_occurrences(c.tokens, c.conduit_bank[i]);
    EXPECT_EQ(a.conduit_counts[i], naive);
    EXPECT_GE(naive, spec.in_rule_repeats + spec.outside_occurrences);
  }
  // Every rule's conduit comes from the bank, each used exactly in_rule_repeats times.
  std::map<Conduit, std::size_t> uses;
  for (const auto& r : c.rules) ++uses[Conduit(c.tokens.begin() + r.alpha + 1, c.tokens.begin() + r.omega)];
  EXPECT_EQ(uses.size(), spec.bank_size);
  for (const auto& [q, n] : uses) EXPECT_EQ(n, spec.in_rule_repeats);
}

TEST(GenTrain, DeterministicPerSeed) {
  const auto spec = small_spec(Setting::Familiar);
  const auto a = gen_train(spec), b = gen_train(spec);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.rules, b.rules);
  auto other = spec;
  other.seed = 8;
  EXPECT_NE(gen_train(other).tokens, a.tokens);
}

TEST(GenTrain, UnfamiliarWithoutBankGetsFreshConduits) {
  auto spec = small_spec(Setting::Unfamiliar);
  spec.bank_size = 7;  // 7 * 10 != 100: no bank
  ASSERT_FALSE(spec.uses_bank());
  spec.sigma_size = 1000;
  const auto c = gen_train(spec);
  EXPECT_TRUE(audit_corpus(c, spec.corpus_len, spec.conduit_len).ok());
  EXPECT_GT(c.conduit_bank.size(), 95u);  // collisions among 10^9 triples are vanishingly rare
}

TEST(PlaceSpans, ArrangementIsUniform) {
  // One span of length 3 in 10 tokens has 8 equally likely start offsets.
  Rng rng(99);
  std::vector<int> counts(8, 0);
  const int trials = 16000;
  for (int t = 0; t < trials; ++t) {
    std::vector<TokenId> tokens(10, 3);
    const auto starts = detail::place_spans(tokens, {{1, 4, 2}}, rng);
    ASSERT_EQ(starts.size(), 1u);
    ASSERT_LE(starts[0], 7u);
    ++counts[starts[0]];
  }
  // expected 2000 each, sd ~ 42
  for (int c : counts) EXPECT_NEAR(c, 2000, 200);
}

TEST(PlaceSpans, ExactFitAndOverflow) {
  Rng rng(1);
  std::vector<TokenId> tokens(6, 3);
  const auto starts = detail::place_spans(tokens, {{1, 2}, {1, 5, 6, 2}}, rng);
  EXPECT_EQ(starts, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(tokens, (std::vector<TokenId>{1, 2, 1, 5, 6, 2}));
  std::vector<TokenId> small(3, 3);
  EXPECT_THROW(detail::place_spans(small, {{1, 2, 3, 4}}, rng), std::invalid_argument);
}

TEST(GenTests, InAndOutDomainConduits) {
  const auto spec = small_spec(Setting::Familiar);
  const auto train = gen_train(spec);
  const auto t = gen_tests(spec, train);
  const std::set<Conduit> bank(train.conduit_bank.begin(), train.conduit_bank.end());
  for (const SynthCorpus* c : {&t.in_domain, &t.out_domain}) {
    const auto a = audit_corpus(*c, spec.test_len, spec.conduit_len);
    EXPECT_TRUE(a.ok());
    EXPECT_EQ(a.alpha_count, spec.test_rules);
  }
  for (const auto& r : t.in_domain.rules)
    EXPECT_TRUE(bank.count(Conduit(t.in_domain.tokens.begin() + r.alpha + 1, t.in_domain.tokens.begin() + r.omega)));
  std::size_t fresh = 0;
  for (const auto& r : t.out_domain.rules)
    fresh += !bank.count(Conduit(t.out_domain.tokens.begin() + r.alpha + 1, t.out_domain.tokens.begin() + r.omega));
  EXPECT_GE(fresh, spec.test_rules - 1);
}

TEST(GenGrid, OnePointPerFeasibleCell) {
  auto base = small_spec(Setting::Unfamiliar);
  base.corpus_len = 2000;
  base.test_len = 200;
  base.test_rules = 5;
  const auto g = gen_grid(base, {10, 100, 400}, {2, 5});
  // 400 rules of length 7 need 2800 tokens
  EXPECT_EQ(g.points.size(), 5u);
  ASSERT_EQ(g.skipped.size(), 1u);
  EXPECT_NE(g.skipped[0].find("n=400 k=5"), std::string::npos);
  for (const auto& pt : g.points) {
    const auto a = audit_corpus(pt.corpus, base.corpus_len, pt.k);
    EXPECT_TRUE(a.ok());
    EXPECT_EQ(a.alpha_count, pt.n);
  }
}

TEST(CorpusAudit, DetectsDamage) {
  const auto spec = small_spec(Setting::Unfamiliar);
  auto c = gen_train(spec);
  auto broken = c;
  broken.tokens[broken.rules[3].omega] = Vocab::symbol_id(0);
  EXPECT_FALSE(audit_corpus(broken, spec.corpus_len, spec.conduit_len).ok());
  broken = c;
  broken.tokens[0] = Vocab::kAlpha;
  if (c.rules.front().alpha != 0) EXPECT_FALSE(audit_corpus(broken, spec.corpus_len, spec.conduit_len).ok());
  EXPECT_FALSE(audit_corpus(c, spec.corpus_len + 1, spec.conduit_len).ok());
}

TEST(CorpusIo, RoundTripThroughFiles) {
  const auto spec = small_spec(Setting::Familiar);
  const auto c = gen_train(spec);
  const auto path = std::filesystem::temp_directory_path() / "cdlab_synth_roundtrip.txt";
  write_corpus(path, spec, c);
  SynthSpec back_spec;
  const auto back = read_corpus(path, &back_spec);
  EXPECT_EQ(back_spec, spec);
  EXPECT_EQ(back.tokens, c.tokens);
  EXPECT_EQ(back.rules, c.rules);
  EXPECT_EQ(back.conduit_bank, c.conduit_bank);
}

TEST(CorpusIo, TextTokensRoundTrip) {
  const Vocab v = Vocab::synthetic(5);
  const std::vector<TokenId> toks{1, 3, 4, 2, 7, 0};
  EXPECT_EQ(text_to_tokens(tokens_to_text(toks, v, 4), v), toks);
  EXPECT_EQ(text_to_tokens("ALPHA t0 zzz", v), (std::vector<TokenId>{1, 3, 0}));
}
