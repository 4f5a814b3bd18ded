// Plain-SGD training with truncated BPTT on a single token stream.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdlab/lstm.hpp"
#include "cdlab/rng.hpp"
#include "cdlab/vocab.hpp"

namespace cdlab {

struct TrainConfig {
  double learning_rate = 1.0;
  double clip_norm = 0.25;
  std::size_t epochs = 1;
  std::size_t bptt_len = 35;
  std::size_t hidden_dim = 200;
  std::size_t embed_dim = 100;
  double forget_bias = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("train config: clip_norm must be > 0");
    if (bptt_len == 0) throw std::invalid_argument("train config: bptt_len must be >= 1");
    if (hidden_dim == 0 || embed_dim == 0) throw std::invalid_argument("train config: zero model dimension");
  }

  bool operator==(const TrainConfig&) const = default;
};

struct Checkpoint {
  LstmParams params;
  Vocab vocab;
  TrainConfig config;
  std::size_t epoch = 0;
  std::map<std::string, double> metrics;

  bool operator==(const Checkpoint&) const = default;
};

inline double squared_norm(const LstmParams& g) {
  double acc = 0.0;
  for (auto t : g.tensors()) acc += dot(t, t);
  return acc;
}

/// Rescales `grad` in place so its global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_global_norm(LstmParams& grad, double max_norm) {
  const double norm = std::sqrt(squared_norm(grad));
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto t : grad.tensors())
      for (double& x : t) x *= s;
  }
  return norm;
}

/// p -= lr * g
inline void sgd_update(LstmParams& p, const LstmParams& g, double lr) {
  auto pt = p.tensors();
  auto gt = g.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k)
    for (std::size_t i = 0; i < pt[k].size(); ++i) pt[k][i] -= lr * gt[k][i];
}

/// Stateful trainer; one epoch is a single left-to-right pass over the corpus
/// in windows of bptt_len predictions, with the hidden state carried between
/// windows and reset to zero at the start of each epoch.
class Trainer {
 public:
  Trainer(std::vector<TokenId> corpus, Vocab vocab, TrainConfig cfg)
      : corpus_(std::move(corpus)), vocab_(std::move(vocab)), cfg_(cfg) {
    cfg_.validate();
    if (corpus_.size() < cfg_.bptt_len + 1)
      throw std::invalid_argument("train: corpus of " + std::to_string(corpus_.size()) +
                                  " tokens is shorter than bptt_len + 1");
    for (TokenId t : corpus_)
      if (t >= vocab_.size()) throw std::out_of_range("train: corpus token id out of vocabulary range");
    params_ = init_params({vocab_.size(), cfg_.embed_dim, cfg_.hidden_dim}, derive_seed(cfg_.seed, "init"),
                          cfg_.forget_bias);
  }

  /// Continues from a stored checkpoint (epoch counter included).
  void resume(const Checkpoint& ck) {
    if (ck.params.dims() != params_.dims()) throw std::invalid_argument("resume: checkpoint dimensions differ");
    params_ = ck.params;
    epoch_ = ck.epoch;
  }

  /// Runs one epoch; returns the mean per-token training cross-entropy.
  double run_epoch() {
    LstmState state = LstmState::zeros(cfg_.hidden_dim);
    LstmParams grad(params_.dims());
    double total = 0.0;
    std::size_t count = 0;
    const std::size_t n = corpus_.size();
    for (std::size_t start = 0; start + 1 < n; start += cfg_.bptt_len) {
      const std::size_t steps = std::min(cfg_.bptt_len, n - 1 - start);
      std::span<const TokenId> window(corpus_.data() + start, steps + 1);
      grad.set_zero();
      WindowResult r = window_loss_and_grad(params_, window, state, &grad);
      if (!std::isfinite(r.mean_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch_ + 1) +
                                 ", window starting at token " + std::to_string(start));
      last_grad_norm_ = clip_global_norm(grad, cfg_.clip_norm);
      sgd_update(params_, grad, cfg_.learning_rate);
      state = std::move(r.final_state);
      total += r.mean_loss * static_cast<double>(steps);
      count += steps;
    }
    ++epoch_;
    return total / static_cast<double>(count);
  }

  Checkpoint checkpoint(std::map<std::string, double> metrics = {}) const {
    return {params_, vocab_, cfg_, epoch_, std::move(metrics)};
  }

  const LstmParams& params() const { return params_; }
  std::size_t epoch() const { return epoch_; }
  double last_grad_norm() const { return last_grad_norm_; }

 private:
  std::vector<TokenId> corpus_;
  Vocab vocab_;
  TrainConfig cfg_;
  LstmParams params_;
  std::size_t epoch_ = 0;
  double last_grad_norm_ = 0.0;
};

/// Trains for cfg.epochs epochs and returns one checkpoint per epoch. The
/// optional callback sees each checkpoint as it is produced.
inline std::vector<Checkpoint> train(const std::vector<TokenId>& corpus, const Vocab& vocab, const TrainConfig& cfg,
                                     const std::function<void(const Checkpoint&)>& on_epoch = {}) {
  Trainer trainer(corpus, vocab, cfg);
  std::vector<Checkpoint> out;
  out.reserve(cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = trainer.run_epoch();
    out.push_back(trainer.checkpoint({{"train_loss", loss}}));
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

}  // namespace cdlab
