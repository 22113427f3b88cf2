#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iocner/error.hpp"

namespace iocner {

// ---------------------------------------------------------------------------
// UTF-8

// Decodes UTF-8 into code points. Returns std::nullopt on malformed input
// (overlong forms, surrogates and truncated sequences included).
inline std::optional<std::u32string> utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    char32_t cp = 0;
    std::size_t extra = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      cp = lead & 0x1F;
      extra = 1;
    } else if ((lead & 0xF0) == 0xE0) {
      cp = lead & 0x0F;
      extra = 2;
    } else if ((lead & 0xF8) == 0xF0) {
      cp = lead & 0x07;
      extra = 3;
    } else {
      return std::nullopt;
    }
    if (i + extra >= text.size() && extra > 0) return std::nullopt;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (cont & 0x3F);
    }
    static constexpr std::array<char32_t, 4> kMin = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return std::nullopt;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

inline std::string utf8_encode(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token

struct Token {
  std::string surface;
  std::u32string chars;

  bool operator==(const Token&) const = default;
};

// Invalid UTF-8 bytes decode to U+FFFD so that every token has l >= 1.
inline Token make_token(std::string surface) {
  if (surface.empty()) throw std::invalid_argument("token surface must be non-empty");
  Token tok;
  if (auto cps = utf8_decode(surface)) {
    tok.chars = std::move(*cps);
  } else {
    for (unsigned char c : surface) tok.chars.push_back(c < 0x80 ? char32_t{c} : char32_t{0xFFFD});
  }
  tok.surface = std::move(surface);
  return tok;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_outer_punct(char c) {
  switch (c) {
    case ',': case ';': case '(': case ')': case '"':
    case '\'': case '.': case '!': case '?':
      return true;
    default:
      return false;
  }
}

// Whitespace split, then strip outer punctuation unless that would leave
// nothing. Interior punctuation (URLs, paths, hashes) is untouched.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      std::string_view raw = text.substr(i, j - i);
      std::size_t lo = 0, hi = raw.size();
      while (lo < hi && is_outer_punct(raw[lo])) ++lo;
      while (hi > lo && is_outer_punct(raw[hi - 1])) --hi;
      std::string_view kept = (lo < hi) ? raw.substr(lo, hi - lo) : raw;
      tokens.push_back(make_token(std::string(kept)));
    }
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Label scheme

struct EntityType {
  std::string name;  // display name, e.g. "file hash"
  std::string code;  // file spelling, e.g. "file-hash"

  bool operator==(const EntityType&) const = default;
};

inline std::vector<EntityType> default_entity_types() {
  return {
      {"attacker", "attacker"},
      {"attack method", "attack-method"},
      {"attack target", "attack-target"},
      {"domain", "domain"},
      {"e-mail address", "email"},
      {"file hash", "file-hash"},
      {"file information", "file-info"},
      {"IPv4", "IPv4"},
      {"malware", "malware"},
      {"URL", "URL"},
      {"vulnerability", "vulnerability"},
  };
}

// Index 0 is O; type t owns B at 1 + 2t and I at 2 + 2t.
class LabelScheme {
 public:
  LabelScheme() : LabelScheme(default_entity_types()) {}

  explicit LabelScheme(std::vector<EntityType> types) : types_(std::move(types)) {
    if (types_.empty()) throw std::invalid_argument("label scheme needs at least one entity type");
    labels_.push_back("O");
    for (const auto& t : types_) {
      if (t.code.empty() || t.code.find_first_of(" \t\n") != std::string::npos) {
        throw std::invalid_argument("invalid entity code '" + t.code + "'");
      }
      labels_.push_back("B-" + t.code);
      labels_.push_back("I-" + t.code);
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
        throw std::invalid_argument("duplicate label " + labels_[i]);
      }
    }
  }

  int num_types() const { return static_cast<int>(types_.size()); }
  int num_labels() const { return static_cast<int>(labels_.size()); }
  const std::vector<EntityType>& types() const { return types_; }
  const std::vector<std::string>& labels() const { return labels_; }

  static constexpr int outside() { return 0; }
  static constexpr int begin_of(int type) { return 1 + 2 * type; }
  static constexpr int inside_of(int type) { return 2 + 2 * type; }
  static constexpr bool is_begin(int label) { return label > 0 && label % 2 == 1; }
  static constexpr bool is_inside(int label) { return label > 0 && label % 2 == 0; }
  // -1 for O.
  static constexpr int type_of(int label) { return label == 0 ? -1 : (label - 1) / 2; }

  const std::string& label_name(int label) const { return labels_.at(static_cast<std::size_t>(label)); }

  std::optional<int> label_index(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<int> type_by_code(std::string_view code) const {
    for (std::size_t i = 0; i < types_.size(); ++i) {
      if (types_[i].code == code) return static_cast<int>(i);
    }
    return std::nullopt;
  }

  bool operator==(const LabelScheme& other) const { return types_ == other.types_; }

 private:
  std::vector<EntityType> types_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

// True when `next` may follow `prev`; prev == -1 means sentence start.
inline bool bio_transition_allowed(int prev, int next) {
  if (!LabelScheme::is_inside(next)) return true;
  if (prev < 0) return false;
  return LabelScheme::type_of(prev) == LabelScheme::type_of(next);
}

// Position of the first violating label, or nullopt when valid.
inline std::optional<std::size_t> first_bio_violation(const std::vector<int>& labels) {
  int prev = -1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!bio_transition_allowed(prev, labels[i])) return i;
    prev = labels[i];
  }
  return std::nullopt;
}

inline bool is_bio_valid(const std::vector<int>& labels) { return !first_bio_violation(labels); }

// ---------------------------------------------------------------------------
// Sentences and spans

struct Sentence {
  std::vector<Token> tokens;
  std::optional<std::vector<int>> gold_labels;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

struct EntitySpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  int entity_type = 0;

  auto operator<=>(const EntitySpan&) const = default;
};

inline std::vector<EntitySpan> spans_from_bio(const std::vector<int>& labels) {
  if (auto bad = first_bio_violation(labels)) {
    throw ParseError("invalid BIO sequence at position " + std::to_string(*bad));
  }
  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (LabelScheme::is_begin(labels[i])) {
      spans.push_back({i, i + 1, LabelScheme::type_of(labels[i])});
    } else if (LabelScheme::is_inside(labels[i])) {
      spans.back().end = i + 1;
    }
  }
  return spans;
}

inline std::vector<int> bio_from_spans(std::vector<EntitySpan> spans, std::size_t length,
                                       const LabelScheme& scheme) {
  std::sort(spans.begin(), spans.end());
  std::vector<int> labels(length, LabelScheme::outside());
  std::size_t covered = 0;
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) {
      throw std::invalid_argument("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                                  ") out of bounds for length " + std::to_string(length));
    }
    if (s.entity_type < 0 || s.entity_type >= scheme.num_types()) {
      throw std::invalid_argument("span has unknown entity type " + std::to_string(s.entity_type));
    }
    if (s.start < covered) {
      throw std::invalid_argument("overlapping spans at token " + std::to_string(s.start));
    }
    labels[s.start] = LabelScheme::begin_of(s.entity_type);
    for (std::size_t i = s.start + 1; i < s.end; ++i) labels[i] = LabelScheme::inside_of(s.entity_type);
    covered = s.end;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Corpus files: `surface<TAB>label`, one blank line between sentences.

struct CorpusOptions {
  bool repair_bio = false;       // leading I-t becomes B-t instead of an error
  bool labels_optional = false;  // tagging input: label column may be absent
};

inline std::vector<Sentence> parse_corpus(std::istream& in, const LabelScheme& scheme,
                                          const CorpusOptions& opts = {},
                                          const std::string& source = "<input>") {
  std::vector<Sentence> out;
  Sentence cur;
  std::vector<int> labels;
  bool labelled = false, unlabelled = false;
  std::size_t sentence_line = 0;
  std::size_t blank_run = 0;
  bool seen_token = false;

  auto where = [&](std::size_t line) { return source + ":" + std::to_string(line) + ": "; };

  auto flush = [&]() {
    if (cur.tokens.empty()) return;
    if (labelled && unlabelled) {
      throw ParseError(where(sentence_line) + "sentence mixes labelled and unlabelled lines");
    }
    if (labelled) {
      if (opts.repair_bio) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
          int prev = i == 0 ? -1 : labels[i - 1];
          if (!bio_transition_allowed(prev, labels[i])) {
            labels[i] = LabelScheme::begin_of(LabelScheme::type_of(labels[i]));
          }
        }
      }
      if (auto bad = first_bio_violation(labels)) {
        throw ParseError(where(sentence_line + *bad) + "invalid BIO transition in sentence " +
                         std::to_string(out.size() + 1) + " at token " + std::to_string(*bad + 1) +
                         " (" + scheme.label_name(labels[*bad]) + ")");
      }
      cur.gold_labels = labels;
    }
    out.push_back(std::move(cur));
    cur = Sentence{};
    labels.clear();
    labelled = unlabelled = false;
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      ++blank_run;
      continue;
    }
    if (seen_token && blank_run > 1) {
      throw ParseError(where(lineno - 1) + "sentences must be separated by exactly one blank line");
    }
    blank_run = 0;
    seen_token = true;
    if (cur.tokens.empty()) sentence_line = lineno;

    std::string surface, label;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      if (!opts.labels_optional) throw ParseError(where(lineno) + "expected 'token<TAB>label'");
      surface = line;
      unlabelled = true;
    } else {
      surface = line.substr(0, tab);
      label = line.substr(tab + 1);
      if (label.find('\t') != std::string::npos) throw ParseError(where(lineno) + "more than two columns");
      labelled = true;
    }
    if (surface.empty()) throw ParseError(where(lineno) + "empty token");
    if (std::any_of(surface.begin(), surface.end(), is_space)) {
      throw ParseError(where(lineno) + "token contains whitespace");
    }
    if (!utf8_decode(surface)) throw ParseError(where(lineno) + "token is not valid UTF-8");
    if (labelled && tab != std::string::npos) {
      auto idx = scheme.label_index(label);
      if (!idx) throw SchemeError(where(lineno) + "unknown label '" + label + "'");
      labels.push_back(*idx);
    }
    cur.tokens.push_back(make_token(std::move(surface)));
  }
  flush();
  return out;
}

inline std::vector<Sentence> load_corpus(const std::string& path, const LabelScheme& scheme,
                                         const CorpusOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, scheme, opts, path);
}

// Writes `labels` when given, otherwise the sentences' gold labels; sentences
// without either are written as a bare token column.
inline void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences,
                         const LabelScheme& scheme,
                         const std::vector<std::vector<int>>* labels = nullptr) {
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    const std::vector<int>* lab = labels ? &(*labels)[s]
                                         : (sent.gold_labels ? &*sent.gold_labels : nullptr);
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      out << sent.tokens[i].surface;
      if (lab) out << '\t' << scheme.label_name((*lab)[i]);
      out << '\n';
    }
    if (s + 1 < sentences.size()) out << '\n';
  }
}

// Raw report text: each non-blank line is one sentence.
inline std::vector<Sentence> sentences_from_text(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (!toks.empty()) out.push_back(Sentence{std::move(toks), std::nullopt});
  }
  return out;
}

inline std::string span_surface(const Sentence& s, const EntitySpan& span) {
  std::string out;
  for (std::size_t i = span.start; i < span.end; ++i) {
    if (i > span.start) out += ' ';
    out += s.tokens[i].surface;
  }
  return out;
}

}  // namespace iocner
