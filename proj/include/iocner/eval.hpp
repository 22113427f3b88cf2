#pragma once

#include <charconv>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "iocner/corpus.hpp"
#include "iocner/error.hpp"

namespace iocner {

enum class MatchLevel {
  Span,   // exact start, end and type
  Token,  // per-token type agreement, B/I ignored
};

struct TypeScore {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;

  std::size_t support() const { return tp + fn; }
  std::size_t predicted() const { return tp + fp; }

  void finish() {
    precision = predicted() ? static_cast<double>(tp) / static_cast<double>(predicted()) : 0.0;
    recall = support() ? static_cast<double>(tp) / static_cast<double>(support()) : 0.0;
    f1 = (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
};

struct EvalReport {
  std::vector<TypeScore> per_type;
  TypeScore micro;
};

namespace detail {

// (sentence, start, end, type); token level uses (sentence, i, i + 1, type).
using Unit = std::tuple<std::size_t, std::size_t, std::size_t, int>;

inline std::set<Unit> units_of(std::size_t sent, const std::vector<int>& labels, MatchLevel level) {
  std::set<Unit> out;
  if (level == MatchLevel::Span) {
    for (const auto& s : spans_from_bio(labels)) out.emplace(sent, s.start, s.end, s.entity_type);
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != LabelScheme::outside()) out.emplace(sent, i, i + 1, LabelScheme::type_of(labels[i]));
    }
  }
  return out;
}

}  // namespace detail

inline EvalReport entity_prf(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred,
                             const LabelScheme& scheme, MatchLevel level = MatchLevel::Span) {
  if (gold.size() != pred.size()) {
    throw AlignmentError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                         std::to_string(pred.size()));
  }
  EvalReport rep;
  rep.per_type.assign(static_cast<std::size_t>(scheme.num_types()), TypeScore{});
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw AlignmentError("sentence " + std::to_string(s + 1) + ": gold has " + std::to_string(gold[s].size()) +
                           " tokens, prediction has " + std::to_string(pred[s].size()));
    }
    auto g = detail::units_of(s, gold[s], level);
    auto p = detail::units_of(s, pred[s], level);
    for (const auto& u : p) {
      auto& score = rep.per_type[static_cast<std::size_t>(std::get<3>(u))];
      if (g.count(u)) ++score.tp;
      else ++score.fp;
    }
    for (const auto& u : g) {
      if (!p.count(u)) ++rep.per_type[static_cast<std::size_t>(std::get<3>(u))].fn;
    }
  }
  for (auto& t : rep.per_type) {
    t.finish();
    rep.micro.tp += t.tp;
    rep.micro.fp += t.fp;
    rep.micro.fn += t.fn;
  }
  rep.micro.finish();
  return rep;
}

// Gold labels are taken from the sentences; every sentence must carry them.
inline EvalReport entity_prf(const std::vector<Sentence>& gold, const std::vector<std::vector<int>>& pred,
                             const LabelScheme& scheme, MatchLevel level = MatchLevel::Span) {
  std::vector<std::vector<int>> g;
  g.reserve(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!gold[i].gold_labels) throw AlignmentError("gold sentence " + std::to_string(i + 1) + " has no labels");
    g.push_back(*gold[i].gold_labels);
  }
  return entity_prf(g, pred, scheme, level);
}

// Gold and predicted corpora over the same tokens.
inline EvalReport evaluate_corpora(const std::vector<Sentence>& gold, const std::vector<Sentence>& pred,
                                   const LabelScheme& scheme, MatchLevel level = MatchLevel::Span) {
  if (gold.size() != pred.size()) {
    throw AlignmentError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                         std::to_string(pred.size()));
  }
  std::vector<std::vector<int>> p;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i].gold_labels) throw AlignmentError("predicted sentence " + std::to_string(i + 1) + " has no labels");
    if (pred[i].tokens.size() == gold[i].tokens.size()) {
      for (std::size_t k = 0; k < pred[i].tokens.size(); ++k) {
        if (pred[i].tokens[k].surface != gold[i].tokens[k].surface) {
          throw AlignmentError("sentence " + std::to_string(i + 1) + ", token " + std::to_string(k + 1) +
                               ": '" + gold[i].tokens[k].surface + "' vs '" + pred[i].tokens[k].surface + "'");
        }
      }
    }
    p.push_back(*pred[i].gold_labels);
  }
  return entity_prf(gold, p, scheme, level);
}

// Human-readable table: one row per entity type plus the micro average, each
// as "P / R / F1" in percent.
inline std::string format_report_table(const EvalReport& rep, const LabelScheme& scheme) {
  std::ostringstream out;
  auto row = [&](const std::string& name, const TypeScore& t) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-18s %5.1f / %5.1f / %5.1f   %7zu\n", name.c_str(), 100 * t.precision,
                  100 * t.recall, 100 * t.f1, t.support());
    out << buf;
  };
  out << std::left << std::setw(19) << "" << "Precision / Recall / F1-score   support\n";
  for (std::size_t i = 0; i < rep.per_type.size(); ++i) row(scheme.types()[i].name, rep.per_type[i]);
  row("micro average", rep.micro);
  return out.str();
}

// Machine-readable: "type P R F1 support" per line, P/R/F1 as fractions in
// shortest round-trip form; the last line is "micro".
inline std::string format_report_records(const EvalReport& rep, const LabelScheme& scheme) {
  std::ostringstream out;
  auto num = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  auto row = [&](const std::string& code, const TypeScore& t) {
    out << code << ' ' << num(t.precision) << ' ' << num(t.recall) << ' ' << num(t.f1) << ' ' << t.support()
        << '\n';
  };
  for (std::size_t i = 0; i < rep.per_type.size(); ++i) row(scheme.types()[i].code, rep.per_type[i]);
  row("micro", rep.micro);
  return out.str();
}

struct ReportRecord {
  std::string type;
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

inline std::vector<ReportRecord> parse_report_records(std::istream& in) {
  std::vector<ReportRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string type, p, r, f;
    std::size_t support = 0;
    if (!(ls >> type >> p >> r >> f >> support)) {
      throw ParseError("report line " + std::to_string(lineno) + ": expected 'type P R F1 support'");
    }
    ReportRecord rec;
    rec.type = type;
    rec.support = support;
    for (auto [src, dst] : {std::pair{&p, &rec.precision}, {&r, &rec.recall}, {&f, &rec.f1}}) {
      auto res = std::from_chars(src->data(), src->data() + src->size(), *dst);
      if (res.ec != std::errc() || res.ptr != src->data() + src->size()) {
        throw ParseError("report line " + std::to_string(lineno) + ": bad number '" + *src + "'");
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace iocner
