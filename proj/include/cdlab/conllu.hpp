// CoNLL-U reading/writing and dependency-tree distances.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdlab {

struct DepToken {
  std::string form;
  std::string lemma = "_";
  std::string upos;
  std::string xpos = "_";
  std::size_t head = 0;  // 1-based, 0 = root
  std::string deprel;

  bool operator==(const DepToken&) const = default;
};

struct DepSentence {
  std::string id;
  std::vector<DepToken> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const DepSentence&) const = default;
};

struct ConlluDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct ConlluResult {
  std::vector<DepSentence> sentences;
  std::vector<ConlluDiagnostic> diagnostics;
  std::size_t skipped = 0;
};

/// Empty string when the heads form a single rooted tree.
inline std::string tree_problem(const DepSentence& s) {
  const std::size_t n = s.size();
  std::size_t roots = 0;
  for (const auto& t : s.tokens) {
    if (t.head > n) return "head index out of range";
    roots += t.head == 0;
  }
  if (roots != 1) return "expected exactly one root, found " + std::to_string(roots);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cur = i + 1;
    for (std::size_t steps = 0; cur != 0; ++steps) {
      if (steps > n) return "cycle through token " + std::to_string(i + 1);
      cur = s.tokens[cur - 1].head;
    }
  }
  return {};
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline bool parse_index(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses CoNLL-U text. Comment lines, multiword-token ranges and empty nodes
/// are skipped. A sentence with a malformed row or an invalid tree is dropped
/// and reported in `diagnostics`.
inline ConlluResult parse_conllu(std::string_view text) {
  ConlluResult res;
  DepSentence cur;
  bool bad = false;
  bool in_sentence = false;
  std::size_t sentence_start = 0;

  auto finish = [&] {
    if (in_sentence && !bad) {
      if (auto problem = tree_problem(cur); !problem.empty()) {
        res.diagnostics.push_back({sentence_start, "invalid tree: " + problem});
        bad = true;
      }
    }
    if (bad) {
      ++res.skipped;
    } else if (in_sentence) {
      if (cur.id.empty()) cur.id = std::to_string(res.sentences.size() + res.skipped + 1);
      res.sentences.push_back(std::move(cur));
    }
    cur = {};
    bad = false;
    in_sentence = false;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      finish();
      continue;
    }
    if (!in_sentence && cur.id.empty() && !bad) sentence_start = line_no;
    if (line.front() == '#') {
      constexpr std::string_view kSentId = "# sent_id = ";
      if (line.starts_with(kSentId)) cur.id = std::string(line.substr(kSentId.size()));
      continue;
    }
    in_sentence = true;
    if (bad) continue;
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 10) {
      res.diagnostics.push_back({line_no, "malformed row: expected 10 columns, found " + std::to_string(cols.size())});
      bad = true;
      continue;
    }
    if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) continue;
    std::size_t id = 0, head = 0;
    if (!detail::parse_index(cols[0], id) || id != cur.tokens.size() + 1) {
      res.diagnostics.push_back({line_no, "malformed row: bad or out-of-sequence ID '" + std::string(cols[0]) + "'"});
      bad = true;
      continue;
    }
    if (!detail::parse_index(cols[6], head)) {
      res.diagnostics.push_back({line_no, "malformed row: bad HEAD '" + std::string(cols[6]) + "'"});
      bad = true;
      continue;
    }
    cur.tokens.push_back({std::string(cols[1]), std::string(cols[2]), std::string(cols[3]), std::string(cols[4]),
                          head, std::string(cols[7])});
  }
  finish();
  return res;
}

inline std::string serialize_conllu(const std::vector<DepSentence>& sentences) {
  std::ostringstream out;
  for (const auto& s : sentences) {
    if (!s.id.empty()) out << "# sent_id = " << s.id << '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& t = s.tokens[i];
      out << (i + 1) << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << '\t' << t.xpos << "\t_\t" << t.head
          << '\t' << t.deprel << "\t_\t_\n";
    }
    out << '\n';
  }
  return out.str();
}

/// Edge count of the tree path between 0-based tokens l and r.
inline std::size_t syn_distance(const DepSentence& s, std::size_t l, std::size_t r) {
  const std::size_t n = s.size();
  if (l >= n || r >= n) throw std::out_of_range("syn_distance: token index out of range");
  // Ancestor chain of l (1-based ids) with distance from l.
  std::vector<std::size_t> dist_from_l(n + 1, static_cast<std::size_t>(-1));
  std::size_t cur = l + 1;
  for (std::size_t d = 0; cur != 0 && d <= n; ++d) {
    dist_from_l[cur] = d;
    cur = s.tokens[cur - 1].head;
  }
  cur = r + 1;
  for (std::size_t d = 0; cur != 0 && d <= n; ++d) {
    if (dist_from_l[cur] != static_cast<std::size_t>(-1)) return d + dist_from_l[cur];
    cur = s.tokens[cur - 1].head;
  }
  throw std::invalid_argument("syn_distance: tokens are not connected");
}

enum class PosClass { Open, Closed, Other };

inline PosClass pos_class(std::string_view upos) {
  for (std::string_view t : {"ADP", "AUX", "CCONJ", "DET", "NUM", "PART", "PRON", "SCONJ"})
    if (upos == t) return PosClass::Closed;
  for (std::string_view t : {"ADJ", "ADV", "INTJ", "NOUN", "PROPN", "VERB"})
    if (upos == t) return PosClass::Open;
  return PosClass::Other;
}

inline std::string to_string(PosClass c) {
  switch (c) {
    case PosClass::Open: return "open";
    case PosClass::Closed: return "closed";
    default: return "other";
  }
}

enum class PairClass { ClosedClosed, OpenOpen, Mixed, Other };

inline PairClass pair_class(PosClass a, PosClass b) {
  if (a == PosClass::Other || b == PosClass::Other) return PairClass::Other;
  if (a == PosClass::Closed && b == PosClass::Closed) return PairClass::ClosedClosed;
  if (a == PosClass::Open && b == PosClass::Open) return PairClass::OpenOpen;
  return PairClass::Mixed;
}

inline std::string to_string(PairClass c) {
  switch (c) {
    case PairClass::ClosedClosed: return "closed-closed";
    case PairClass::OpenOpen: return "open-open";
    case PairClass::Mixed: return "mixed";
    default: return "other";
  }
}

/// Lowercases ASCII letters; other bytes pass through unchanged.
inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& ch : out)
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  return out;
}

}  // namespace cdlab
