// One-layer LSTM language model: embedding -> LSTM cell -> softmax projection.
//
// Gate blocks are stacked in the fixed order input, forget, output, candidate
// (i, f, o, g) inside w_in (4h x d), w_rec (4h x h) and bias (4h). The same
// order is used by the checkpoint format.
//
//   i = sigmoid(W_i x + V_i h + b_i)     f = sigmoid(W_f x + V_f h + b_f)
//   o = sigmoid(W_o x + V_o h + b_o)     g = tanh(W_g x + V_g h + b_g)
//   c' = f * c + i * g                   h' = o * tanh(c')
//   logits = W_out h' + b_out
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdlab/math.hpp"
#include "cdlab/rng.hpp"
#include "cdlab/vocab.hpp"

namespace cdlab {

enum Gate : std::size_t { kGateI = 0, kGateF = 1, kGateO = 2, kGateG = 3 };
inline constexpr std::size_t kNumGates = 4;

inline Activation gate_activation(std::size_t gate) {
  return gate == kGateG ? Activation::Tanh : Activation::Sigmoid;
}

struct ModelDims {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;

  bool operator==(const ModelDims&) const = default;
};

struct LstmParams {
  Mat64 embed;    // |V| x d
  Mat64 w_in;     // 4h x d
  Mat64 w_rec;    // 4h x h
  Vec64 bias;     // 4h
  Mat64 w_out;    // |V| x h
  Vec64 b_out;    // |V|

  LstmParams() = default;
  explicit LstmParams(const ModelDims& dims)
      : embed(dims.vocab_size, dims.embed_dim),
        w_in(kNumGates * dims.hidden_dim, dims.embed_dim),
        w_rec(kNumGates * dims.hidden_dim, dims.hidden_dim),
        bias(kNumGates * dims.hidden_dim, 0.0),
        w_out(dims.vocab_size, dims.hidden_dim),
        b_out(dims.vocab_size, 0.0) {}

  ModelDims dims() const { return {embed.rows, embed.cols, w_rec.cols}; }
  std::size_t hidden_dim() const { return w_rec.cols; }
  std::size_t vocab_size() const { return embed.rows; }

  /// Views over every tensor in checkpoint order.
  std::vector<std::span<double>> tensors() {
    return {embed.data, w_in.data, w_rec.data, bias, w_out.data, b_out};
  }
  std::vector<std::span<const double>> tensors() const {
    return {embed.data, w_in.data, w_rec.data, bias, w_out.data, b_out};
  }

  std::span<const double> gate_bias(std::size_t gate) const {
    const std::size_t h = hidden_dim();
    return {bias.data() + gate * h, h};
  }

  void set_zero() {
    for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
  }

  /// Throws if any dimension disagrees with the embedding/hidden shape.
  void validate() const {
    const auto d = dims();
    const std::size_t g = kNumGates * d.hidden_dim;
    if (d.vocab_size == 0 || d.embed_dim == 0 || d.hidden_dim == 0)
      throw std::invalid_argument("lstm params: zero dimension");
    if (w_in.rows != g || w_in.cols != d.embed_dim || w_rec.rows != g || bias.size() != g ||
        w_out.rows != d.vocab_size || w_out.cols != d.hidden_dim || b_out.size() != d.vocab_size)
      throw std::invalid_argument("lstm params: inconsistent dimensions");
  }

  bool operator==(const LstmParams&) const = default;
};

struct LstmState {
  Vec64 h;
  Vec64 c;

  static LstmState zeros(std::size_t hidden) { return {Vec64(hidden, 0.0), Vec64(hidden, 0.0)}; }
};

/// Weights uniform in [-1/sqrt(h), 1/sqrt(h)]; biases zero except the forget
/// gate, which is set to forget_bias.
inline LstmParams init_params(const ModelDims& dims, std::uint64_t seed, double forget_bias = 1.0) {
  if (dims.vocab_size == 0 || dims.embed_dim == 0 || dims.hidden_dim == 0)
    throw std::invalid_argument("init_params: zero dimension");
  LstmParams p(dims);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
  for (Mat64* m : {&p.embed, &p.w_in, &p.w_rec, &p.w_out})
    for (double& w : m->data) w = rng.uniform(-scale, scale);
  const std::size_t h = dims.hidden_dim;
  for (std::size_t j = 0; j < h; ++j) p.bias[kGateF * h + j] = forget_bias;
  return p;
}

inline void check_token(const LstmParams& p, TokenId tok) {
  if (tok >= p.vocab_size())
    throw std::out_of_range("token id " + std::to_string(tok) + " out of range for vocabulary of " +
                            std::to_string(p.vocab_size()));
}

/// Post-activation gate values of one step.
struct GateValues {
  Vec64 i, f, o, g;
};

namespace detail {

// preact = W_in x + W_rec h + b for all four gates.
inline void gate_preactivations(const LstmParams& p, TokenId tok, std::span<const double> h_prev,
                                std::span<double> preact) {
  std::copy(p.bias.begin(), p.bias.end(), preact.begin());
  matvec_add(p.w_in, p.embed.row(tok), preact);
  matvec_add(p.w_rec, h_prev, preact);
}

}  // namespace detail

/// Advances the cell by one token, optionally reporting the gate values.
inline LstmState lstm_cell(const LstmParams& p, const LstmState& s, TokenId tok, GateValues* gates = nullptr) {
  check_token(p, tok);
  const std::size_t h = p.hidden_dim();
  if (s.h.size() != h || s.c.size() != h) throw std::invalid_argument("lstm state dimension mismatch");
  Vec64 pre(kNumGates * h);
  detail::gate_preactivations(p, tok, s.h, pre);
  LstmState next{Vec64(h), Vec64(h)};
  if (gates) *gates = GateValues{Vec64(h), Vec64(h), Vec64(h), Vec64(h)};
  for (std::size_t j = 0; j < h; ++j) {
    const double ig = sigmoid(pre[kGateI * h + j]);
    const double fg = sigmoid(pre[kGateF * h + j]);
    const double og = sigmoid(pre[kGateO * h + j]);
    const double gg = tanh_act(pre[kGateG * h + j]);
    next.c[j] = fg * s.c[j] + ig * gg;
    next.h[j] = og * tanh_act(next.c[j]);
    if (gates) {
      gates->i[j] = ig;
      gates->f[j] = fg;
      gates->o[j] = og;
      gates->g[j] = gg;
    }
  }
  return next;
}

inline Vec64 output_logits(const LstmParams& p, std::span<const double> h) {
  Vec64 logits(p.b_out);
  matvec_add(p.w_out, h, logits);
  return logits;
}

inline std::pair<LstmState, Vec64> forward_step(const LstmParams& p, const LstmState& s, TokenId tok) {
  LstmState next = lstm_cell(p, s, tok);
  Vec64 logits = output_logits(p, next.h);
  return {std::move(next), std::move(logits)};
}

/// Runs the sequence from the zero state; returns the state after the last token.
inline LstmState run_sequence(const LstmParams& p, std::span<const TokenId> seq) {
  LstmState s = LstmState::zeros(p.hidden_dim());
  for (TokenId tok : seq) s = lstm_cell(p, s, tok);
  return s;
}

/// Logits after consuming every token of `seq` from the zero state.
inline Vec64 final_logits(const LstmParams& p, std::span<const TokenId> seq) {
  return output_logits(p, run_sequence(p, seq).h);
}

inline Vec64 next_token_distribution(const LstmParams& p, std::span<const TokenId> context) {
  if (context.empty()) throw std::invalid_argument("next-token probability: empty context");
  return softmax(final_logits(p, context));
}

inline double eval_next_token_prob(const LstmParams& p, std::span<const TokenId> context, TokenId target) {
  check_token(p, target);
  return next_token_distribution(p, context)[target];
}

// ---------------------------------------------------------------------------
// Backpropagation through time

/// Per-step activations retained for the backward pass.
struct StepCache {
  TokenId token = 0;
  Vec64 h_prev, c_prev;
  Vec64 i, f, o, g;
  Vec64 c, tanh_c, h;
};

namespace detail {

inline StepCache forward_cached(const LstmParams& p, const LstmState& s, TokenId tok, Vec64& pre) {
  const std::size_t h = p.hidden_dim();
  StepCache sc;
  sc.token = tok;
  sc.h_prev = s.h;
  sc.c_prev = s.c;
  sc.i.resize(h);
  sc.f.resize(h);
  sc.o.resize(h);
  sc.g.resize(h);
  sc.c.resize(h);
  sc.tanh_c.resize(h);
  sc.h.resize(h);
  gate_preactivations(p, tok, s.h, pre);
  for (std::size_t j = 0; j < h; ++j) {
    sc.i[j] = sigmoid(pre[kGateI * h + j]);
    sc.f[j] = sigmoid(pre[kGateF * h + j]);
    sc.o[j] = sigmoid(pre[kGateO * h + j]);
    sc.g[j] = tanh_act(pre[kGateG * h + j]);
    sc.c[j] = sc.f[j] * s.c[j] + sc.i[j] * sc.g[j];
    sc.tanh_c[j] = tanh_act(sc.c[j]);
    sc.h[j] = sc.o[j] * sc.tanh_c[j];
  }
  return sc;
}

// Backward through one cell step. On entry dh/dc hold the total gradient
// w.r.t. this step's h and the gradient flowing into c from later steps; on
// exit they hold the gradients w.r.t. h_prev and c_prev. `grad` may be null
// when only state gradients are wanted.
inline void backward_cell(const LstmParams& p, const StepCache& sc, Vec64& dh, Vec64& dc, Vec64& da,
                          LstmParams* grad) {
  const std::size_t h = p.hidden_dim();
  for (std::size_t j = 0; j < h; ++j) {
    const double dcj = dc[j] + dh[j] * sc.o[j] * (1.0 - sc.tanh_c[j] * sc.tanh_c[j]);
    const double d_o = dh[j] * sc.tanh_c[j];
    const double d_i = dcj * sc.g[j];
    const double d_g = dcj * sc.i[j];
    const double d_f = dcj * sc.c_prev[j];
    da[kGateI * h + j] = d_i * sc.i[j] * (1.0 - sc.i[j]);
    da[kGateF * h + j] = d_f * sc.f[j] * (1.0 - sc.f[j]);
    da[kGateO * h + j] = d_o * sc.o[j] * (1.0 - sc.o[j]);
    da[kGateG * h + j] = d_g * (1.0 - sc.g[j] * sc.g[j]);
    dc[j] = dcj * sc.f[j];
  }
  if (grad) {
    const auto x = p.embed.row(sc.token);
    outer_add(grad->w_in, da, x);
    outer_add(grad->w_rec, da, sc.h_prev);
    for (std::size_t r = 0; r < da.size(); ++r) grad->bias[r] += da[r];
    matvec_t_add(p.w_in, da, grad->embed.row(sc.token));
  }
  std::fill(dh.begin(), dh.end(), 0.0);
  matvec_t_add(p.w_rec, da, dh);
}

}  // namespace detail

struct WindowResult {
  double mean_loss = 0.0;
  LstmState final_state;
};

/// Mean next-token cross-entropy over a window and its gradient.
///
/// `tokens` holds T+1 ids: inputs tokens[0..T-1] predict targets tokens[1..T].
/// Gradients are accumulated into `grad` (which must be zeroed by the caller
/// if a fresh gradient is wanted). `init` is treated as a constant.
inline WindowResult window_loss_and_grad(const LstmParams& p, std::span<const TokenId> tokens,
                                         const LstmState& init, LstmParams* grad) {
  if (tokens.size() < 2) throw std::invalid_argument("window needs at least two tokens");
  const std::size_t steps = tokens.size() - 1;
  const std::size_t h = p.hidden_dim();
  const std::size_t vocab = p.vocab_size();
  const double scale = 1.0 / static_cast<double>(steps);

  std::vector<StepCache> caches;
  caches.reserve(steps);
  std::vector<Vec64> dlogits;
  if (grad) dlogits.reserve(steps);
  Vec64 pre(kNumGates * h);
  Vec64 logits(vocab);
  LstmState s = init;
  double loss = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    check_token(p, tokens[t]);
    check_token(p, tokens[t + 1]);
    caches.push_back(detail::forward_cached(p, s, tokens[t], pre));
    const StepCache& sc = caches.back();
    std::copy(p.b_out.begin(), p.b_out.end(), logits.begin());
    matvec_add(p.w_out, sc.h, logits);
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vec64 d(vocab);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += (d[v] = std::exp(logits[v] - mx));
    loss += mx + std::log(z) - logits[tokens[t + 1]];
    if (grad) {
      const double w = scale / z;
      for (double& x : d) x *= w;
      d[tokens[t + 1]] -= scale;
      dlogits.push_back(std::move(d));
    }
    s.h = sc.h;
    s.c = sc.c;
  }

  if (grad) {
    Vec64 dh(h, 0.0), dc(h, 0.0), da(kNumGates * h);
    for (std::size_t t = steps; t-- > 0;) {
      const StepCache& sc = caches[t];
      const Vec64& dl = dlogits[t];
      outer_add(grad->w_out, dl, sc.h);
      for (std::size_t v = 0; v < vocab; ++v) grad->b_out[v] += dl[v];
      matvec_t_add(p.w_out, dl, dh);
      detail::backward_cell(p, sc, dh, dc, da, grad);
    }
  }
  return {loss * scale, std::move(s)};
}

/// Cross-entropy of predicting sequence[t+1] from the hidden state at t, and
/// the norm of its gradient w.r.t. each hidden state h_{t-k+d}, d = 1..k.
///
/// h_j denotes the hidden state after consuming sequence[j]; the cell state
/// c_j is held fixed when differentiating w.r.t. h_j.
inline Vec64 grad_probe(const LstmParams& p, std::span<const TokenId> sequence, std::size_t t, std::size_t k) {
  if (k == 0 || k > t) throw std::invalid_argument("grad_probe: offsets out of range (need 1 <= k <= t)");
  if (t + 1 >= sequence.size()) throw std::invalid_argument("grad_probe: no target after error position");
  const std::size_t h = p.hidden_dim();
  const TokenId target = sequence[t + 1];
  check_token(p, target);

  std::vector<StepCache> caches;
  caches.reserve(t + 1);
  Vec64 pre(kNumGates * h);
  LstmState s = LstmState::zeros(h);
  for (std::size_t j = 0; j <= t; ++j) {
    check_token(p, sequence[j]);
    caches.push_back(detail::forward_cached(p, s, sequence[j], pre));
    s.h = caches.back().h;
    s.c = caches.back().c;
  }
  Vec64 logits = output_logits(p, s.h);
  Vec64 dl = softmax(logits);
  dl[target] -= 1.0;

  Vec64 dh(h, 0.0), dc(h, 0.0), da(kNumGates * h);
  matvec_t_add(p.w_out, dl, dh);

  // mags[d-1] = |de/dh_{t-k+d}|
  Vec64 mags(k);
  for (std::size_t d = k; d >= 1; --d) {
    const std::size_t j = t - k + d;
    mags[d - 1] = norm2(dh);
    if (d == 1) break;
    detail::backward_cell(p, caches[j], dh, dc, da, nullptr);
  }
  return mags;
}

/// Like grad_probe, but the error is the summed cross-entropy of every
/// prediction made from h_0..h_t (targets sequence[1..t+1]), so each conduit
/// step also contributes the error of predicting its own successor.
inline Vec64 total_error_profile(const LstmParams& p, std::span<const TokenId> sequence, std::size_t t,
                                 std::size_t k) {
  if (k == 0 || k > t) throw std::invalid_argument("total_error_profile: offsets out of range (need 1 <= k <= t)");
  if (t + 1 >= sequence.size()) throw std::invalid_argument("total_error_profile: no target after error position");
  const std::size_t h = p.hidden_dim();
  std::vector<StepCache> caches;
  caches.reserve(t + 1);
  Vec64 pre(kNumGates * h);
  LstmState s = LstmState::zeros(h);
  for (std::size_t j = 0; j <= t; ++j) {
    check_token(p, sequence[j]);
    check_token(p, sequence[j + 1]);
    caches.push_back(detail::forward_cached(p, s, sequence[j], pre));
    s.h = caches.back().h;
    s.c = caches.back().c;
  }
  Vec64 dh(h, 0.0), dc(h, 0.0), da(kNumGates * h);
  Vec64 mags(k);
  for (std::size_t j = t;; --j) {
    Vec64 dl = softmax(output_logits(p, caches[j].h));
    dl[sequence[j + 1]] -= 1.0;
    matvec_t_add(p.w_out, dl, dh);
    const std::size_t d = j + k - t;  // offset of h_j
    mags[d - 1] = norm2(dh);
    if (d == 1) break;
    detail::backward_cell(p, caches[j], dh, dc, da, nullptr);
  }
  return mags;
}

/// Cross-entropy of sequence[t+1] given the hidden state at t, starting the
/// recurrence from a supplied state at position `from` (used by perturbation
/// checks of grad_probe).
inline double error_from_state(const LstmParams& p, std::span<const TokenId> sequence, std::size_t from,
                               const LstmState& state_at_from, std::size_t t) {
  LstmState s = state_at_from;
  for (std::size_t j = from + 1; j <= t; ++j) s = lstm_cell(p, s, sequence[j]);
  Vec64 logits = output_logits(p, s.h);
  return log_sum_exp(logits) - logits[sequence[t + 1]];
}

}  // namespace cdlab
