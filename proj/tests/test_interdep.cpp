#include <gtest/gtest.h>

#include <cmath>

#include "cdlab/interdep.hpp"
#include "oracles.hpp"

using namespace cdlab;

namespace {

LstmParams random_params(const ModelDims& d, std::uint64_t seed, double scale = 1.0) {
  LstmParams p(d);
  Rng rng(seed);
  for (auto t : p.tensors())
    for (double& x : t) x = rng.uniform(-scale, scale);
  return p;
}

LstmParams sine_params(const ModelDims& d) {
  LstmParams p(d);
  double g = 0.0;
  for (auto t : p.tensors())
    for (double& x : t) x = 0.8 * std::sin(++g);
  return p;
}

}  // namespace

TEST(Interdependence, FrozenHighPrecisionReference) {
  const auto p = sine_params({3, 2, 2});
  const InterdepQuery q{{2, 0, 1, 2}, FocusSet{0}, FocusSet{2}, 3};
  EXPECT_NEAR(interdependence(p, q).value, 0.01130605215564867637, 1e-12);
}

TEST(Interdependence, SymmetricNonnegativeAndMatchesOracle) {
  Rng rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_params({7, 4, 5}, 1000 + trial, 1.0);
    InterdepQuery q;
    q.sequence.resize(3 + rng.below(10));
    for (auto& t : q.sequence) t = static_cast<TokenId>(rng.below(7));
    const std::size_t n = q.sequence.size();
    const std::size_t l = rng.below(n - 1);
    const std::size_t r = l + 1 + rng.below(n - 1 - l);
    q.a = FocusSet{l};
    q.b = FocusSet{r};
    q.at = r + rng.below(n - r);
    const double ab = interdependence(p, q).value;
    std::swap(q.a, q.b);
    const double ba = interdependence(p, q).value;
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    const double ref = oracle::interdependence(p, q.sequence, oracle::mask(n, {l}), oracle::mask(n, {r}), q.at);
    EXPECT_NEAR(ab, ref, 1e-12);
  }
}

TEST(Interdependence, InvariantToOutputScale) {
  auto p = random_params({7, 4, 5}, 3);
  const InterdepQuery q{{1, 2, 3, 4, 5, 6}, FocusSet{1}, FocusSet{3, 4}, 5};
  const double before = interdependence(p, q).value;
  for (double& w : p.w_out.data) w *= 3.5;
  EXPECT_NEAR(interdependence(p, q).value, before, 1e-12 * std::max(1.0, before));
}

TEST(Interdependence, Deterministic) {
  const auto p = random_params({7, 4, 5}, 4);
  const InterdepQuery q{{1, 2, 3, 4}, FocusSet{0}, FocusSet{2}, 3};
  EXPECT_EQ(interdependence(p, q).value, interdependence(p, q).value);
}

TEST(Interdependence, QueryValidation) {
  const auto p = random_params({7, 4, 5}, 5);
  const std::vector<TokenId> seq{1, 2, 3, 4};
  EXPECT_THROW(interdependence(p, {seq, FocusSet{1}, FocusSet{1, 2}, 3}), std::invalid_argument);
  EXPECT_THROW(interdependence(p, {seq, FocusSet{}, FocusSet{2}, 3}), std::invalid_argument);
  EXPECT_THROW(interdependence(p, {seq, FocusSet{0}, FocusSet{3}, 2}), std::invalid_argument);
  EXPECT_THROW(interdependence(p, {seq, FocusSet{0}, FocusSet{1}, 4}), std::invalid_argument);
}

TEST(Interdependence, ZeroDenominatorIsReportedNotZero) {
  LstmParams p({5, 2, 3});  // all zeros: every relevant logit vector vanishes
  EXPECT_THROW(interdependence(p, {{1, 2, 3}, FocusSet{0}, FocusSet{1}, 2}), UndefinedMeasurement);
}

TEST(PairSweep, RecordCountMatchesCombinatorics) {
  const auto p = random_params({7, 4, 5}, 6);
  for (std::size_t len : {2u, 5u, 9u}) {
    for (std::size_t cap : {1u, 3u, 20u}) {
      std::vector<TokenId> s(len);
      for (std::size_t i = 0; i < len; ++i) s[i] = static_cast<TokenId>(i % 7);
      const auto res = pair_sweep(p, s, cap);
      std::size_t expected = 0;
      for (std::size_t d = 1; d <= cap; ++d) expected += d < len ? len - d : 0;
      EXPECT_EQ(res.pairs.size() + res.undefined, expected);
      EXPECT_EQ(res.undefined, 0u);
    }
  }
}

TEST(PairSweep, OrderedAndEvaluatedAtRightWord) {
  const auto p = random_params({7, 4, 5}, 7);
  const std::vector<TokenId> s{3, 1, 4, 1, 5};
  const auto res = pair_sweep(p, s, 2);
  for (std::size_t i = 1; i < res.pairs.size(); ++i) {
    const auto& a = res.pairs[i - 1];
    const auto& b = res.pairs[i];
    EXPECT_TRUE(a.l < b.l || (a.l == b.l && a.r < b.r));
  }
  const auto& first = res.pairs.front();
  EXPECT_EQ(first.value, interdependence(p, {s, FocusSet{first.l}, FocusSet{first.r}, first.r}).value);
  const auto final_step = pair_sweep(p, s, 2, PairTimestep::SentenceFinal);
  EXPECT_EQ(final_step.pairs.front().value, interdependence(p, {s, FocusSet{0}, FocusSet{1}, 4}).value);
}

TEST(PairSweep, ZeroModelCountsUndefinedPairs) {
  LstmParams p({5, 2, 3});
  const auto res = pair_sweep(p, std::vector<TokenId>{1, 2, 3}, 2);
  EXPECT_TRUE(res.pairs.empty());
  EXPECT_EQ(res.undefined, 3u);
}
