// Contextual Decomposition of a one-layer LSTM.
//
// Every hidden and cell vector is carried as a pair (rel, irr) with
// rel + irr equal to the plain forward value. "rel" is the contribution of the
// tokens in focus; "irr" holds the contribution of the remaining tokens plus
// every interaction between the two groups.
//
// Gate activations are split by a three-player Shapley linearization (lin3)
// in which the gate bias is the conditioning baseline: its share act(bias) is
// fixed, and the remaining change act(rel + irr + bias) - act(bias) is split
// between the rel and irr players by averaging over both join orders. The
// three shares sum to act(rel + irr + bias) exactly.
//
// Products of decomposed factors (f * c_prev, i * g, o * tanh(c)) keep the
// three parts apart. A term is relevant when it involves no irrelevant part
// and at least one relevant part; bias x bias terms are relevant only at
// timesteps in focus. Everything touching the irrelevant part goes to the
// irrelevant side. The bias is not a word, so its products with the relevant
// part stay relevant at every timestep; otherwise the focus contribution is
// wiped out one step after the focus ends.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdlab/lstm.hpp"
#include "cdlab/math.hpp"

namespace cdlab {

struct Lin3 {
  double rel;
  double irr;
  double bias;
};

/// Shapley split of act(rel + irr + bias) with the bias as baseline.
inline Lin3 lin3(Activation act, double rel, double irr, double bias) {
  const double a_b = activate(act, bias);
  const double a_rb = activate(act, rel + bias);
  const double a_ib = activate(act, irr + bias);
  const double a_all = activate(act, rel + irr + bias);
  return {0.5 * ((a_rb - a_b) + (a_all - a_ib)), 0.5 * ((a_ib - a_b) + (a_all - a_rb)), a_b};
}

/// Sorted set of 0-based timestep indices in focus.
class FocusSet {
 public:
  FocusSet() = default;
  FocusSet(std::initializer_list<std::size_t> idx) : FocusSet(std::vector<std::size_t>(idx)) {}
  explicit FocusSet(std::vector<std::size_t> idx) : idx_(std::move(idx)) {
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
  }

  /// [first, last] inclusive.
  static FocusSet range(std::size_t first, std::size_t last) {
    std::vector<std::size_t> v;
    for (std::size_t i = first; i <= last; ++i) v.push_back(i);
    return FocusSet(std::move(v));
  }
  static FocusSet all(std::size_t length) { return length == 0 ? FocusSet{} : range(0, length - 1); }

  bool contains(std::size_t i) const { return std::binary_search(idx_.begin(), idx_.end(), i); }
  bool empty() const { return idx_.empty(); }
  std::size_t size() const { return idx_.size(); }
  const std::vector<std::size_t>& indices() const { return idx_; }
  std::size_t max() const { return idx_.back(); }

  bool intersects(const FocusSet& o) const {
    return std::any_of(idx_.begin(), idx_.end(), [&](std::size_t i) { return o.contains(i); });
  }

  FocusSet united(const FocusSet& o) const {
    std::vector<std::size_t> v = idx_;
    v.insert(v.end(), o.idx_.begin(), o.idx_.end());
    return FocusSet(std::move(v));
  }

  FocusSet complement(std::size_t length) const {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < length; ++i)
      if (!contains(i)) v.push_back(i);
    return FocusSet(std::move(v));
  }

  bool operator==(const FocusSet&) const = default;

 private:
  std::vector<std::size_t> idx_;
};

struct DecompState {
  Vec64 h_rel, h_irr, c_rel, c_irr;

  static DecompState zeros(std::size_t hidden) {
    return {Vec64(hidden, 0.0), Vec64(hidden, 0.0), Vec64(hidden, 0.0), Vec64(hidden, 0.0)};
  }
};

inline DecompState decompose_step(const LstmParams& p, const DecompState& ds, TokenId tok, bool in_focus) {
  check_token(p, tok);
  const std::size_t h = p.hidden_dim();
  if (ds.h_rel.size() != h || ds.h_irr.size() != h || ds.c_rel.size() != h || ds.c_irr.size() != h)
    throw std::invalid_argument("decompose_step: state dimension mismatch");

  const std::size_t g4 = kNumGates * h;
  Vec64 rel_pre(g4, 0.0), irr_pre(g4, 0.0);
  matvec_add(p.w_rec, ds.h_rel, rel_pre);
  matvec_add(p.w_rec, ds.h_irr, irr_pre);
  matvec_add(p.w_in, p.embed.row(tok), in_focus ? std::span<double>(rel_pre) : std::span<double>(irr_pre));

  // Per gate row: rel, irr and bias shares.
  Vec64 g_rel(g4), g_irr(g4), g_bias(g4);
  for (std::size_t q = 0; q < kNumGates; ++q) {
    const Activation act = gate_activation(q);
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t r = q * h + j;
      const Lin3 s = lin3(act, rel_pre[r], irr_pre[r], p.bias[r]);
      g_rel[r] = s.rel;
      g_irr[r] = s.irr;
      g_bias[r] = s.bias;
    }
  }

  DecompState out = DecompState::zeros(h);
  for (std::size_t j = 0; j < h; ++j) {
    const std::size_t ii = kGateI * h + j, fi = kGateF * h + j, oi = kGateO * h + j, gi = kGateG * h + j;
    const double c_r = ds.c_rel[j], c_i = ds.c_irr[j];

    // Relevant and irrelevant terms are summed separately (rather than taking
    // one as the remainder) so that empty and full foci give exact zeros.
    const double f_ri = g_rel[fi] + g_bias[fi];
    const double i_ri = g_rel[ii] + g_bias[ii];
    const double g_ri = g_rel[gi] + g_bias[gi];
    double i_g_rel = g_rel[ii] * g_rel[gi] + g_rel[ii] * g_bias[gi] + g_bias[ii] * g_rel[gi];
    double i_g_irr = g_irr[ii] * (g_ri + g_irr[gi]) + i_ri * g_irr[gi];
    (in_focus ? i_g_rel : i_g_irr) += g_bias[ii] * g_bias[gi];
    out.c_rel[j] = f_ri * c_r + i_g_rel;
    out.c_irr[j] = g_irr[fi] * (c_r + c_i) + f_ri * c_i + i_g_irr;

    const Lin3 t = lin3(Activation::Tanh, out.c_rel[j], out.c_irr[j], 0.0);
    const double o_ri = g_rel[oi] + g_bias[oi];
    out.h_rel[j] = o_ri * t.rel;
    out.h_irr[j] = g_irr[oi] * (t.rel + t.irr) + o_ri * t.irr;
  }
  return out;
}

struct CdOutput {
  Vec64 v_rel;
  Vec64 v_irr;
  double approx_err = 0.0;
};

/// Decomposed logits at timestep `at` (i.e. after consuming sequence[at]).
/// The output bias is assigned to v_irr.
inline CdOutput cd_run(const LstmParams& p, std::span<const TokenId> sequence, const FocusSet& focus, std::size_t at) {
  if (at >= sequence.size())
    throw std::invalid_argument("cd_run: timestep " + std::to_string(at) + " outside sequence of length " +
                                std::to_string(sequence.size()));
  if (!focus.empty() && focus.max() >= sequence.size())
    throw std::invalid_argument("cd_run: focus index " + std::to_string(focus.max()) + " outside sequence");

  const std::size_t h = p.hidden_dim();
  DecompState ds = DecompState::zeros(h);
  LstmState plain = LstmState::zeros(h);
  for (std::size_t t = 0; t <= at; ++t) {
    ds = decompose_step(p, ds, sequence[t], focus.contains(t));
    plain = lstm_cell(p, plain, sequence[t]);
  }

  CdOutput out;
  out.v_rel = matvec(p.w_out, ds.h_rel);
  out.v_irr = output_logits(p, ds.h_irr);
  const Vec64 v = output_logits(p, plain.h);
  const Vec64 diff = sub(add(out.v_rel, out.v_irr), v);
  const double vn = norm2(v);
  out.approx_err = vn > 0.0 ? norm2(diff) / vn : norm2(diff);
  return out;
}

/// softmax(v_rel)[target]
inline double cd_probability(const CdOutput& out, TokenId target) {
  if (target >= out.v_rel.size())
    throw std::out_of_range("cd_probability: target id " + std::to_string(target) + " out of range");
  return softmax(out.v_rel)[target];
}

/// CD probability of `target` at the step before the close symbol
/// (alpha_pos + k) as the focus grows from {alpha} to {alpha .. alpha + k}.
/// Point i has focus {alpha_pos, ..., alpha_pos + i}; there are k + 1 points,
/// the last covering the open symbol and the whole conduit.
inline Vec64 prefix_curve(const LstmParams& p, std::span<const TokenId> sequence, std::size_t alpha_pos, std::size_t k,
                          TokenId target = Vocab::kOmega) {
  if (k == 0) throw std::invalid_argument("prefix_curve: k must be >= 1");
  const std::size_t at = alpha_pos + k;
  if (at >= sequence.size()) throw std::invalid_argument("prefix_curve: span runs past the sequence");
  Vec64 curve;
  curve.reserve(k + 1);
  for (std::size_t i = 0; i <= k; ++i)
    curve.push_back(cd_probability(cd_run(p, sequence, FocusSet::range(alpha_pos, alpha_pos + i), at), target));
  return curve;
}

inline nlohmann::json cd_record(const CdOutput& out, const FocusSet& focus, std::size_t at,
                                const std::vector<TokenId>& targets) {
  nlohmann::json probs = nlohmann::json::object();
  const Vec64 dist = softmax(out.v_rel);
  for (TokenId t : targets) {
    if (t >= dist.size()) throw std::out_of_range("cd_record: target id out of range");
    probs[std::to_string(t)] = dist[t];
  }
  return {{"focus", focus.indices()},
          {"at", at},
          {"v_rel_norm", norm2(out.v_rel)},
          {"target_probabilities", probs},
          {"approx_err", out.approx_err}};
}

}  // namespace cdlab
