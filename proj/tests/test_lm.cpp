#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cdlab/checkpoint.hpp"
#include "cdlab/lstm.hpp"
#include "cdlab/train.hpp"
#include "oracles.hpp"
#include "toy_model.hpp"

using namespace cdlab;

namespace {

LstmParams random_params(const ModelDims& d, std::uint64_t seed, double scale = 1.0) {
  LstmParams p(d);
  Rng rng(seed);
  for (auto t : p.tensors())
    for (double& x : t) x = rng.uniform(-scale, scale);
  return p;
}

std::vector<TokenId> random_sequence(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<TokenId> s(len);
  for (auto& t : s) t = static_cast<TokenId>(rng.below(vocab));
  return s;
}

}  // namespace

TEST(InitParams, DeterministicForSeed) {
  const ModelDims d{7, 5, 4};
  EXPECT_EQ(init_params(d, 3), init_params(d, 3));
  EXPECT_FALSE(init_params(d, 3) == init_params(d, 4));
}

TEST(InitParams, ForgetBiasIsOneOtherBiasesZero) {
  const auto p = init_params({7, 5, 4}, 1);
  for (std::size_t g = 0; g < kNumGates; ++g)
    for (double b : p.gate_bias(g)) EXPECT_EQ(b, g == kGateF ? 1.0 : 0.0);
  for (double b : p.b_out) EXPECT_EQ(b, 0.0);
}

TEST(InitParams, WeightsCenteredAndBounded) {
  const ModelDims d{200, 30, 32};
  const auto p = init_params(d, 99);
  const double s = 1.0 / std::sqrt(32.0);
  std::vector<double> all;
  for (const Mat64* m : {&p.embed, &p.w_in, &p.w_rec, &p.w_out}) all.insert(all.end(), m->data.begin(), m->data.end());
  ASSERT_GE(all.size(), 10000u);
  double sum = 0.0;
  for (double w : all) {
    ASSERT_LE(std::abs(w), s);
    sum += w;
  }
  const double mean = sum / static_cast<double>(all.size());
  const double sigma_of_mean = s / std::sqrt(3.0 * static_cast<double>(all.size()));
  EXPECT_LT(std::abs(mean), 3.0 * sigma_of_mean);
}

TEST(InitParams, ZeroDimensionThrows) { EXPECT_THROW(init_params({5, 0, 3}, 1), std::invalid_argument); }

TEST(ForwardStep, ZeroParamsGiveZeroState) {
  LstmParams p({5, 3, 2});
  auto [s, logits] = forward_step(p, LstmState::zeros(2), 4);
  for (double x : s.h) EXPECT_EQ(x, 0.0);
  for (double x : s.c) EXPECT_EQ(x, 0.0);
  for (double x : logits) EXPECT_EQ(x, 0.0);
}

TEST(ForwardStep, OutputBiasPassesThroughWithZeroWeights) {
  LstmParams p({5, 3, 2});
  p.b_out = {0.1, -0.2, 0.3, 0.0, 2.0};
  LstmState s = LstmState::zeros(2);
  for (TokenId t : {1u, 4u, 0u}) {
    auto [next, logits] = forward_step(p, s, t);
    EXPECT_EQ(logits, p.b_out);
    s = next;
  }
}

TEST(ForwardStep, MatchesScalarOracle) {
  const auto p = random_params({5, 4, 3}, 17, 0.8);
  Rng rng(5);
  const auto seq = random_sequence(rng, 12, 5);
  LstmState s = LstmState::zeros(3);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    auto [next, logits] = forward_step(p, s, seq[t]);
    const auto ref = oracle::run(p, seq, t);
    const auto ref_logits = oracle::logits(p, ref.h);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(next.h[j], ref.h[j], 1e-12);
      EXPECT_NEAR(next.c[j], ref.c[j], 1e-12);
    }
    for (std::size_t v = 0; v < 5; ++v) EXPECT_NEAR(logits[v], ref_logits[v], 1e-12);
    s = next;
  }
}

TEST(ForwardStep, TokenOutOfRangeThrows) {
  LstmParams p({5, 3, 2});
  EXPECT_THROW(forward_step(p, LstmState::zeros(2), 5), std::out_of_range);
}

TEST(ForwardStep, HiddenStateStaysInsideUnitBox) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_params({6, 3, 4}, 100 + trial, 5.0);
    const auto seq = random_sequence(rng, 30, 6);
    LstmState s = LstmState::zeros(4);
    for (TokenId t : seq) {
      s = lstm_cell(p, s, t);
      for (double h : s.h) {
        ASSERT_TRUE(std::isfinite(h));
        ASSERT_LT(std::abs(h), 1.0);
      }
    }
  }
}

TEST(EvalNextTokenProb, ZeroParamsAreUniform) {
  LstmParams p({6, 2, 2});
  const std::vector<TokenId> ctx{1, 2, 3};
  for (TokenId t = 0; t < 6; ++t) EXPECT_NEAR(eval_next_token_prob(p, ctx, t), 1.0 / 6.0, 1e-15);
}

TEST(EvalNextTokenProb, SumsToOne) {
  const auto p = random_params({6, 3, 3}, 4);
  const std::vector<TokenId> ctx{5, 0, 2};
  double sum = 0.0;
  for (TokenId t = 0; t < 6; ++t) sum += eval_next_token_prob(p, ctx, t);
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(EvalNextTokenProb, Errors) {
  LstmParams p({6, 2, 2});
  EXPECT_THROW(eval_next_token_prob(p, std::vector<TokenId>{}, 1), std::invalid_argument);
  EXPECT_THROW(eval_next_token_prob(p, std::vector<TokenId>{1}, 6), std::out_of_range);
}

TEST(EvalNextTokenProb, TrainedToyPredictsCloseSymbolAtRuleEnd) {
  const auto& toy = testing_toy::model();
  double at_close = 0.0, at_random = 0.0;
  std::size_t n = 0;
  for (const auto& r : toy.test.rules) {
    if (r.alpha < 20) continue;
    std::span<const TokenId> all(toy.test.tokens);
    at_close += eval_next_token_prob(toy.params, all.subspan(r.alpha - 10, r.omega - (r.alpha - 10)), Vocab::kOmega);
    at_random += eval_next_token_prob(toy.params, all.subspan(r.alpha - 20, 10), Vocab::kOmega);
    ++n;
  }
  ASSERT_GT(n, 20u);
  at_close /= static_cast<double>(n);
  at_random /= static_cast<double>(n);
  EXPECT_GT(at_close, 10.0 * at_random) << "close " << at_close << " random " << at_random;
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

// Relative error with a floor on the scale so that entries whose true
// gradient is (near) zero are compared in absolute terms.
double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-5); }

double max_fd_error(const LstmParams& p, const std::vector<TokenId>& seq) {
  LstmParams grad(p.dims());
  window_loss_and_grad(p, seq, LstmState::zeros(p.hidden_dim()), &grad);
  LstmParams probe = p;
  auto pt = probe.tensors();
  auto gt = grad.tensors();
  double worst = 0.0;
  const double eps = 1e-5;
  for (std::size_t k = 0; k < pt.size(); ++k) {
    for (std::size_t i = 0; i < pt[k].size(); ++i) {
      const double orig = pt[k][i];
      pt[k][i] = orig + eps;
      const double up = oracle::window_loss(probe, seq);
      pt[k][i] = orig - eps;
      const double down = oracle::window_loss(probe, seq);
      pt[k][i] = orig;
      worst = std::max(worst, rel_err(gt[k][i], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace

TEST(Gradient, LossMatchesOracle) {
  const auto p = random_params({6, 3, 4}, 21, 0.7);
  Rng rng(1);
  const auto seq = random_sequence(rng, 10, 6);
  const auto r = window_loss_and_grad(p, seq, LstmState::zeros(4), nullptr);
  EXPECT_NEAR(r.mean_loss, oracle::window_loss(p, seq), 1e-12);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelDims d{3 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
    const auto p = random_params(d, 500 + trial, 0.9);
    const auto seq = random_sequence(rng, 2 + rng.below(9), d.vocab_size);
    EXPECT_LT(max_fd_error(p, seq), 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, ClippingBoundsGlobalNorm) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    LstmParams g = random_params({6, 3, 4}, 900 + trial, 3.0);
    const double before = clip_global_norm(g, 0.25);
    EXPECT_GT(before, 0.25);
    EXPECT_LE(std::sqrt(squared_norm(g)), 0.25 + 1e-12);
  }
  LstmParams small = random_params({3, 1, 1}, 1, 1e-3);
  const LstmParams copy = small;
  clip_global_norm(small, 0.25);
  EXPECT_EQ(small, copy);
}

// ---------------------------------------------------------------------------
// Gradient probe

TEST(GradProbe, ZeroRecurrenceCutsPathThroughTime) {
  auto p = random_params({6, 3, 4}, 31, 0.8);
  std::fill(p.w_rec.data.begin(), p.w_rec.data.end(), 0.0);
  const std::vector<TokenId> seq{1, 3, 4, 5, 3, 2};
  const std::size_t k = 4, t = 4;
  const auto mags = grad_probe(p, seq, t, k);
  ASSERT_EQ(mags.size(), k);
  for (std::size_t d = 1; d < k; ++d) EXPECT_EQ(mags[d - 1], 0.0);
  EXPECT_GT(mags[k - 1], 0.0);
}

TEST(GradProbe, MatchesFiniteDifferencesOfHiddenState) {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params({6, 3, 4}, 40 + trial, 0.9);
    const auto seq = random_sequence(rng, 9, 6);
    const std::size_t k = 5, t = 7;
    const auto mags = grad_probe(p, seq, t, k);
    for (std::size_t d = 1; d <= k; ++d) {
      const std::size_t j = t - k + d;
      const auto base = oracle::run(p, seq, j);
      double sq = 0.0;
      for (std::size_t u = 0; u < 4; ++u) {
        auto err_with = [&](double delta) {
          oracle::Scalars s = base;
          s.h[u] += delta;
          for (std::size_t m = j + 1; m <= t; ++m) s = oracle::step(p, s, seq[m]);
          const auto v = oracle::logits(p, s.h);
          double mx = v[0];
          for (double x : v) mx = std::max(mx, x);
          double z = 0.0;
          for (double x : v) z += std::exp(x - mx);
          return mx + std::log(z) - v[seq[t + 1]];
        };
        const double g = (err_with(1e-5) - err_with(-1e-5)) / 2e-5;
        sq += g * g;
      }
      EXPECT_LT(rel_err(mags[d - 1], std::sqrt(sq)), 1e-4) << "trial " << trial << " d " << d;
    }
  }
}

TEST(TotalErrorProfile, MatchesFiniteDifferencesOfHiddenState) {
  Rng rng(78);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params({6, 3, 4}, 140 + trial, 0.9);
    const auto seq = random_sequence(rng, 9, 6);
    const std::size_t k = 5, t = 7;
    const auto mags = total_error_profile(p, seq, t, k);
    for (std::size_t d = 1; d <= k; ++d) {
      const std::size_t j = t - k + d;
      const auto base = oracle::run(p, seq, j);
      double sq = 0.0;
      for (std::size_t u = 0; u < 4; ++u) {
        // errors made before h_j do not depend on it
        auto err_with = [&](double delta) {
          oracle::Scalars s = base;
          s.h[u] += delta;
          double e = 0.0;
          for (std::size_t m = j;; ++m) {
            if (m > j) s = oracle::step(p, s, seq[m]);
            const auto v = oracle::logits(p, s.h);
            double z = 0.0;
            for (double x : v) z += std::exp(x);
            e += std::log(z) - v[seq[m + 1]];
            if (m == t) break;
          }
          return e;
        };
        const double g = (err_with(1e-5) - err_with(-1e-5)) / 2e-5;
        sq += g * g;
      }
      EXPECT_LT(rel_err(mags[d - 1], std::sqrt(sq)), 1e-4) << "trial " << trial << " d " << d;
    }
  }
}

TEST(TotalErrorProfile, LastOffsetEqualsGradProbe) {
  const auto p = random_params({6, 3, 4}, 9, 0.8);
  const std::vector<TokenId> seq{1, 3, 4, 5, 3, 2};
  EXPECT_EQ(total_error_profile(p, seq, 4, 3).back(), grad_probe(p, seq, 4, 3).back());
  EXPECT_THROW(total_error_profile(p, seq, 5, 3), std::invalid_argument);
}

TEST(GradProbe, FiniteAndNonnegative) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params({8, 4, 5}, 60 + trial, 2.0);
    const auto seq = random_sequence(rng, 12, 8);
    for (double m : grad_probe(p, seq, 10, 8)) {
      EXPECT_TRUE(std::isfinite(m));
      EXPECT_GE(m, 0.0);
    }
  }
}

TEST(GradProbe, OffsetsOutOfRangeThrow) {
  const auto p = random_params({6, 3, 4}, 1);
  const std::vector<TokenId> seq{1, 2, 3, 4};
  EXPECT_THROW(grad_probe(p, seq, 2, 3), std::invalid_argument);
  EXPECT_THROW(grad_probe(p, seq, 3, 2), std::invalid_argument);
  EXPECT_THROW(grad_probe(p, seq, 2, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<TokenId> alternating(std::size_t n) {
  std::vector<TokenId> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = (i % 2 == 0) ? 3 : 4;
  return c;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.bptt_len = 10;
  cfg.hidden_dim = 8;
  cfg.embed_dim = 6;
  cfg.seed = 12;
  return cfg;
}

}  // namespace

TEST(Train, MemorizesAlternatingCorpus) {
  Vocab vocab;
  vocab.add("a");
  vocab.add("b");
  const auto corpus = alternating(400);
  const auto cks = train(corpus, vocab, small_config(20));
  ASSERT_EQ(cks.size(), 20u);
  const auto& p = cks.back().params;
  const auto r = window_loss_and_grad(p, corpus, LstmState::zeros(p.hidden_dim()), nullptr);
  EXPECT_LT(r.mean_loss, 0.01);
  EXPECT_LT(cks.back().metrics.at("train_loss"), cks.front().metrics.at("train_loss"));
}

TEST(Train, DeterministicGivenSeed) {
  Vocab vocab;
  vocab.add("a");
  vocab.add("b");
  vocab.add("c");
  Rng rng(3);
  const auto corpus = random_sequence(rng, 300, vocab.size());
  const auto a = train(corpus, vocab, small_config(3));
  const auto b = train(corpus, vocab, small_config(3));
  EXPECT_EQ(a.back(), b.back());
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  Vocab vocab;
  vocab.add("a");
  vocab.add("b");
  Rng rng(6);
  const auto corpus = random_sequence(rng, 200, vocab.size());
  const auto full = train(corpus, vocab, small_config(4));
  Trainer resumed(corpus, vocab, small_config(4));
  resumed.resume(full[1]);
  resumed.run_epoch();
  resumed.run_epoch();
  EXPECT_EQ(resumed.epoch(), 4u);
  EXPECT_EQ(resumed.params(), full[3].params);
}

TEST(Train, RejectsShortCorpusAndBadConfig) {
  Vocab vocab;
  EXPECT_THROW(Trainer(std::vector<TokenId>(5, 1), vocab, small_config(1)), std::invalid_argument);
  auto cfg = small_config(1);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(Trainer(std::vector<TokenId>(50, 1), vocab, cfg), std::invalid_argument);
}

TEST(Train, NonFiniteLossAborts) {
  Vocab vocab;
  vocab.add("a");
  Trainer trainer(std::vector<TokenId>(50, 3), vocab, small_config(1));
  Checkpoint ck = trainer.checkpoint();
  ck.params.w_out.data[0] = NAN;
  trainer.resume(ck);
  EXPECT_THROW(trainer.run_epoch(), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripsBitExactly) {
  Vocab vocab;
  vocab.add("hello");
  vocab.add("world");
  Checkpoint ck{random_params({5, 3, 2}, 8), vocab, small_config(2), 2, {{"train_loss", 0.1234567890123}}};
  ck.params.bias[0] = -0.0;
  ck.params.w_in.data[1] = 1e-308;
  const auto path = std::filesystem::temp_directory_path() / "cdlab_test_ck.gsck";
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back, ck);
  EXPECT_TRUE(std::signbit(back.params.bias[0]));

  const auto bytes = read_file(path);
  EXPECT_EQ(bytes.substr(0, 4), "GSCK");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 5);  // vocab size
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto p = random_params({4, 2, 2}, 1);
  auto bytes = encode_params(p, 0);
  EXPECT_EQ(decode_params(bytes), p);
  EXPECT_THROW(decode_params(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
  bytes[0] = 'X';
  EXPECT_THROW(decode_params(bytes), std::runtime_error);
  auto wrong_version = encode_params(p, 0);
  wrong_version[4] = 9;
  EXPECT_THROW(decode_params(wrong_version), std::runtime_error);
}

TEST(Vocab, ReservedIdsSurviveRebuild) {
  Vocab v;
  v.add("x");
  v.add("y");
  const auto back = Vocab::from_tokens(v.tokens());
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.id("ALPHA"), Vocab::kAlpha);
  EXPECT_EQ(back.id("OMEGA"), Vocab::kOmega);
  EXPECT_EQ(back.id("never-seen"), Vocab::kUnk);
  EXPECT_THROW(Vocab::from_tokens({"x", "y", "z"}), std::invalid_argument);
}
