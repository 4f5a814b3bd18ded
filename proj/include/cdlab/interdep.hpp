// Interdependence between two disjoint word sets:
//
//   interdependence(A, B) = |v_{A u B} - (v_A + v_B)|_2 / |v_{A u B}|_2
//
// where v_S is the relevant logit vector of a CD run with S in focus.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdlab/cd.hpp"

namespace cdlab {

/// Raised when |v_{A u B}| is zero and the measure is undefined.
class UndefinedMeasurement : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InterdepQuery {
  std::vector<TokenId> sequence;
  FocusSet a;
  FocusSet b;
  std::size_t at = 0;
};

struct InterdepResult {
  double value = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  double norm_ab = 0.0;
};

inline void validate(const InterdepQuery& q) {
  if (q.a.empty() || q.b.empty()) throw std::invalid_argument("interdependence: word sets must be nonempty");
  if (q.a.intersects(q.b)) throw std::invalid_argument("interdependence: word sets overlap");
  if (q.at >= q.sequence.size()) throw std::invalid_argument("interdependence: timestep outside sequence");
  if (q.a.max() > q.at || q.b.max() > q.at)
    throw std::invalid_argument("interdependence: word set index after evaluation timestep");
}

inline InterdepResult interdependence(const LstmParams& p, const InterdepQuery& q) {
  validate(q);
  const Vec64 va = cd_run(p, q.sequence, q.a, q.at).v_rel;
  const Vec64 vb = cd_run(p, q.sequence, q.b, q.at).v_rel;
  const Vec64 vab = cd_run(p, q.sequence, q.a.united(q.b), q.at).v_rel;

  InterdepResult r;
  r.norm_a = norm2(va);
  r.norm_b = norm2(vb);
  r.norm_ab = norm2(vab);
  if (!(r.norm_ab > 0.0)) throw UndefinedMeasurement("interdependence: |v_{A u B}| is zero");
  // Summation order keeps the measure exactly symmetric in (A, B).
  Vec64 diff(vab.size());
  for (std::size_t i = 0; i < vab.size(); ++i) diff[i] = vab[i] - (va[i] + vb[i]);
  r.value = norm2(diff) / r.norm_ab;
  return r;
}

struct PairValue {
  std::size_t l = 0;
  std::size_t r = 0;
  double value = 0.0;
};

/// Where a pair's logits are read.
enum class PairTimestep { Right, SentenceFinal };

struct PairSweepResult {
  std::vector<PairValue> pairs;
  std::size_t undefined = 0;
};

/// Interdependence of every pair (l, r) with 1 <= r - l <= max_seq_dist,
/// A = {l}, B = {r}, ordered by (l, r). Pairs whose measure is undefined are
/// skipped and counted.
inline PairSweepResult pair_sweep(const LstmParams& p, std::span<const TokenId> sentence, std::size_t max_seq_dist,
                                  PairTimestep when = PairTimestep::Right) {
  PairSweepResult out;
  const std::size_t n = sentence.size();
  if (n < 2) return out;
  InterdepQuery q;
  q.sequence.assign(sentence.begin(), sentence.end());
  for (std::size_t l = 0; l + 1 < n; ++l) {
    for (std::size_t r = l + 1; r < n && r - l <= max_seq_dist; ++r) {
      q.a = FocusSet{l};
      q.b = FocusSet{r};
      q.at = when == PairTimestep::Right ? r : n - 1;
      try {
        out.pairs.push_back({l, r, interdependence(p, q).value});
      } catch (const UndefinedMeasurement&) {
        ++out.undefined;
      }
    }
  }
  return out;
}

}  // namespace cdlab
