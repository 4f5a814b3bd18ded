// Interdependence of word pairs in a dependency treebank, joined with tree
// distance and part-of-speech class, and aggregated into strata.
#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cdlab/conllu.hpp"
#include "cdlab/interdep.hpp"
#include "cdlab/vocab.hpp"

namespace cdlab {

struct PairRecord {
  std::size_t sentence = 0;
  std::size_t l = 0;
  std::size_t r = 0;
  std::size_t seq_dist = 0;
  std::size_t syn_dist = 0;
  PairClass cls = PairClass::Other;
  double value = 0.0;
};

/// Forms are lowercased and looked up in the LM vocabulary (unknown -> <unk>).
inline std::vector<TokenId> sentence_ids(const DepSentence& s, const Vocab& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(s.size());
  for (const auto& t : s.tokens) ids.push_back(vocab.id(ascii_lower(t.form)));
  return ids;
}

struct TreebankSweep {
  std::vector<PairRecord> records;
  std::size_t undefined = 0;
};

inline TreebankSweep sweep_treebank(const LstmParams& p, const Vocab& vocab, const std::vector<DepSentence>& sentences,
                                    std::size_t max_seq_dist, PairTimestep when = PairTimestep::Right) {
  TreebankSweep out;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const DepSentence& s = sentences[si];
    const auto ids = sentence_ids(s, vocab);
    const auto sweep = pair_sweep(p, ids, max_seq_dist, when);
    out.undefined += sweep.undefined;
    for (const auto& pv : sweep.pairs) {
      PairRecord rec;
      rec.sentence = si;
      rec.l = pv.l;
      rec.r = pv.r;
      rec.seq_dist = pv.r - pv.l;
      rec.syn_dist = syn_distance(s, pv.l, pv.r);
      rec.cls = pair_class(pos_class(s.tokens[pv.l].upos), pos_class(s.tokens[pv.r].upos));
      rec.value = pv.value;
      out.records.push_back(rec);
    }
  }
  return out;
}

struct StratumKey {
  std::size_t seq_dist = 0;
  std::size_t syn_dist = 0;
  std::string cls;

  auto operator<=>(const StratumKey&) const = default;
};

struct StratumCell {
  StratumKey key;
  double mean = 0.0;
  std::size_t count = 0;
  double stderr_ = 0.0;
  bool suppressed = false;
};

enum class StrataBy { PairClass, Pooled };

/// Mean, count and standard error per (seq_dist, syn_dist, class). With
/// StrataBy::Pooled the class key is "all" and pairs of class "other" are
/// left out. Cells with fewer than min_cases records are flagged suppressed.
inline std::vector<StratumCell> stratify(const std::vector<PairRecord>& records, std::size_t min_cases = 100,
                                         StrataBy by = StrataBy::PairClass) {
  std::map<StratumKey, std::vector<double>> groups;
  for (const auto& r : records) {
    if (by == StrataBy::Pooled && r.cls == PairClass::Other) continue;
    groups[{r.seq_dist, r.syn_dist, by == StrataBy::Pooled ? std::string("all") : to_string(r.cls)}].push_back(r.value);
  }
  std::vector<StratumCell> out;
  for (const auto& [key, values] : groups) {
    StratumCell c;
    c.key = key;
    c.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    c.mean = sum / static_cast<double>(c.count);
    if (c.count > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - c.mean) * (v - c.mean);
      c.stderr_ = std::sqrt(ss / static_cast<double>(c.count - 1)) / std::sqrt(static_cast<double>(c.count));
    }
    c.suppressed = c.count < min_cases;
    out.push_back(c);
  }
  return out;
}

inline void write_records_csv(std::ostream& out, const std::vector<PairRecord>& records, bool with_tree = true) {
  out << "sentence_id,l,r,seq_dist,value";
  if (with_tree) out << ",syn_dist,class";
  out << '\n';
  out.precision(17);
  for (const auto& r : records) {
    out << r.sentence << ',' << r.l << ',' << r.r << ',' << r.seq_dist << ',' << r.value;
    if (with_tree) out << ',' << r.syn_dist << ',' << to_string(r.cls);
    out << '\n';
  }
}

inline void write_strata_csv(std::ostream& out, const std::vector<StratumCell>& cells) {
  out << "seq_dist,syn_dist,class,mean,count,stderr,suppressed\n";
  out.precision(17);
  for (const auto& c : cells)
    out << c.key.seq_dist << ',' << c.key.syn_dist << ',' << c.key.cls << ',' << c.mean << ',' << c.count << ','
        << c.stderr_ << ',' << (c.suppressed ? 1 : 0) << '\n';
}

}  // namespace cdlab
