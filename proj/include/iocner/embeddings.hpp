#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "iocner/corpus.hpp"
#include "iocner/error.hpp"
#include "iocner/netcore.hpp"

namespace iocner {

// ---------------------------------------------------------------------------
// Vocabularies

// Index 0 is reserved for unknown tokens and never holds a corpus token.
class TokenVocab {
 public:
  static constexpr std::size_t kUnk = 0;

  TokenVocab() = default;
  explicit TokenVocab(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i + 1).second) throw ParseError("duplicate vocabulary entry '" + words_[i] + "'");
    }
  }

  std::size_t index(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view token) const { return index(token) != kUnk; }
  // Number of rows including UNK.
  std::size_t size() const { return words_.size() + 1; }
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const TokenVocab& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Same layout for characters: 0 is the unknown character.
class CharVocab {
 public:
  static constexpr std::size_t kUnk = 0;

  CharVocab() = default;
  explicit CharVocab(std::vector<char32_t> chars) : chars_(std::move(chars)) {
    for (std::size_t i = 0; i < chars_.size(); ++i) index_.emplace(chars_[i], i + 1);
  }

  static CharVocab from_sentences(const std::vector<Sentence>& sentences) {
    std::vector<char32_t> seen;
    std::unordered_map<char32_t, bool> have;
    for (const auto& s : sentences)
      for (const auto& t : s.tokens)
        for (char32_t c : t.chars)
          if (have.emplace(c, true).second) seen.push_back(c);
    std::sort(seen.begin(), seen.end());
    return CharVocab(std::move(seen));
  }

  std::size_t index(char32_t c) const {
    auto it = index_.find(c);
    return it == index_.end() ? kUnk : it->second;
  }
  std::size_t size() const { return chars_.size() + 1; }
  const std::vector<char32_t>& chars() const { return chars_; }

  bool operator==(const CharVocab& o) const { return chars_ == o.chars_; }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, std::size_t> index_;
};

// One column per vocabulary entry; column 0 is UNK.
struct TokenEmbeddingTable {
  Mat vectors;
  Eigen::Index dim() const { return vectors.rows(); }
};

// ---------------------------------------------------------------------------
// Skip-gram with negative sampling

struct SkipGramConfig {
  int dim = 100;
  int window = 8;
  int min_count = 1;
  int iterations = 15;
  int negatives = 8;
  double initial_lr = 0.025;
  std::uint64_t seed = 1;
  // More than one thread switches to lock-free shared updates; results are
  // then no longer reproducible run to run.
  int threads = 1;
};

struct PretrainedEmbeddings {
  TokenVocab vocab;
  TokenEmbeddingTable table;
};

// (center, context) position pairs within `window` of each other.
inline std::vector<std::pair<std::size_t, std::size_t>> skipgram_pairs(std::size_t length, int window) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t c = 0; c < length; ++c) {
    const std::size_t lo = c >= static_cast<std::size_t>(window) ? c - static_cast<std::size_t>(window) : 0;
    const std::size_t hi = std::min(length - 1, c + static_cast<std::size_t>(window));
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != c) out.emplace_back(c, j);
  }
  return out;
}

namespace detail {

template <bool Shared>
inline double load(const double* p) {
  if constexpr (Shared) {
    return std::atomic_ref<double>(*const_cast<double*>(p)).load(std::memory_order_relaxed);
  } else {
    return *p;
  }
}

template <bool Shared>
inline void store(double* p, double v) {
  if constexpr (Shared) {
    std::atomic_ref<double>(*p).store(v, std::memory_order_relaxed);
  } else {
    *p = v;
  }
}

struct SkipGramState {
  Mat syn0, syn1;
  std::vector<double> cumulative;  // unigram^0.75 CDF
};

inline std::size_t sample_negative(const std::vector<double>& cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

template <bool Shared>
inline void train_sentence(SkipGramState& st, const std::vector<std::size_t>& ids, const SkipGramConfig& cfg,
                           double lr, Rng& rng, std::vector<double>& grad_in) {
  const auto dim = static_cast<std::size_t>(cfg.dim);
  for (auto [c, j] : skipgram_pairs(ids.size(), cfg.window)) {
    double* in = st.syn0.col(static_cast<Eigen::Index>(ids[c])).data();
    std::fill(grad_in.begin(), grad_in.end(), 0.0);
    const std::size_t target = ids[j];
    for (int d = 0; d <= cfg.negatives; ++d) {
      std::size_t out_id;
      double label;
      if (d == 0) {
        out_id = target;
        label = 1.0;
      } else {
        out_id = sample_negative(st.cumulative, rng);
        if (out_id == target) continue;
        label = 0.0;
      }
      double* out = st.syn1.col(static_cast<Eigen::Index>(out_id)).data();
      double dot = 0;
      for (std::size_t k = 0; k < dim; ++k) dot += load<Shared>(in + k) * load<Shared>(out + k);
      const double g = (label - sigmoid(dot)) * lr;
      for (std::size_t k = 0; k < dim; ++k) {
        const double o = load<Shared>(out + k);
        grad_in[k] += g * o;
        store<Shared>(out + k, o + g * load<Shared>(in + k));
      }
    }
    for (std::size_t k = 0; k < dim; ++k) store<Shared>(in + k, load<Shared>(in + k) + grad_in[k]);
  }
}

}  // namespace detail

// Vocabulary is ordered by descending count, then lexicographically.
inline PretrainedEmbeddings pretrain_skipgram(const std::vector<std::vector<std::string>>& texts,
                                              const SkipGramConfig& cfg = {}) {
  if (cfg.dim <= 0 || cfg.window <= 0 || cfg.min_count <= 0 || cfg.iterations <= 0 || cfg.negatives < 0 ||
      cfg.threads <= 0) {
    throw std::invalid_argument("invalid skip-gram configuration");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& s : texts)
    for (const auto& w : s) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts)
    if (c >= static_cast<std::size_t>(cfg.min_count)) kept.emplace_back(w, c);
  if (kept.empty()) throw EmptyCorpusError("skip-gram pretraining: empty corpus");
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words;
  for (const auto& kv : kept) words.push_back(kv.first);
  PretrainedEmbeddings result;
  result.vocab = TokenVocab(std::move(words));
  const std::size_t V = result.vocab.size();

  Rng rng(cfg.seed);
  detail::SkipGramState st;
  st.syn0 = Mat::Zero(cfg.dim, static_cast<Eigen::Index>(V));
  for (std::size_t w = 1; w < V; ++w)
    for (int k = 0; k < cfg.dim; ++k)
      st.syn0(k, static_cast<Eigen::Index>(w)) = (uniform01(rng) - 0.5) / cfg.dim;
  st.syn1 = Mat::Zero(cfg.dim, static_cast<Eigen::Index>(V));
  st.cumulative.assign(V, 0.0);
  for (std::size_t w = 1; w < V; ++w) {
    st.cumulative[w] = st.cumulative[w - 1] + std::pow(static_cast<double>(kept[w - 1].second), 0.75);
  }

  std::vector<std::vector<std::size_t>> ids;
  std::size_t total = 0;
  for (const auto& s : texts) {
    std::vector<std::size_t> row;
    for (const auto& w : s)
      if (auto i = result.vocab.index(w); i != TokenVocab::kUnk) row.push_back(i);
    total += row.size();
    if (row.size() >= 2) ids.push_back(std::move(row));
  }
  const double budget = static_cast<double>(total) * cfg.iterations + 1.0;
  auto rate = [&](double processed) {
    return cfg.initial_lr * std::max(1.0 - processed / budget, 1e-4);
  };

  if (cfg.threads == 1) {
    std::vector<double> grad_in(static_cast<std::size_t>(cfg.dim));
    double processed = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
      for (const auto& s : ids) {
        detail::train_sentence<false>(st, s, cfg, rate(processed), rng, grad_in);
        processed += static_cast<double>(s.size());
      }
    }
  } else {
    std::atomic<std::size_t> processed{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < cfg.threads; ++t) {
      workers.emplace_back([&, t] {
        Rng local(cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(t + 1));
        std::vector<double> grad_in(static_cast<std::size_t>(cfg.dim));
        for (int it = 0; it < cfg.iterations; ++it) {
          for (std::size_t k = static_cast<std::size_t>(t); k < ids.size(); k += static_cast<std::size_t>(cfg.threads)) {
            detail::train_sentence<true>(st, ids[k], cfg, rate(static_cast<double>(processed.load())), local, grad_in);
            processed += ids[k].size();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
  }

  // UNK gets a uniform [-1, 1] column, like other freshly initialized weights.
  for (int k = 0; k < cfg.dim; ++k) st.syn0(k, 0) = uniform(rng, -1.0, 1.0);
  result.table.vectors = std::move(st.syn0);
  return result;
}

inline double cosine(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0;
  return a.dot(b) / (na * nb);
}

// ---------------------------------------------------------------------------
// Embedding file: "<vocab_size> <dim>" then "token v1 ... vdim" per line.
// UNK is not written.

inline void write_embeddings(std::ostream& out, const TokenVocab& vocab, const TokenEmbeddingTable& table) {
  out << vocab.words().size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (std::size_t w = 0; w < vocab.words().size(); ++w) {
    out << vocab.words()[w];
    for (Eigen::Index k = 0; k < table.dim(); ++k) {
      auto res = std::to_chars(buf, buf + sizeof buf, table.vectors(k, static_cast<Eigen::Index>(w + 1)));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

// Reads the file; the UNK column is filled uniform [-1, 1] from `rng`.
inline PretrainedEmbeddings read_embeddings(std::istream& in, Rng& rng, const std::string& source = "<embeddings>") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": missing header");
  std::size_t count = 0;
  int dim = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> count >> dim) || dim <= 0) throw ParseError(source + ":1: header must be '<vocab_size> <dim>'");
  }
  std::vector<std::string> words;
  Mat vectors(dim, static_cast<Eigen::Index>(count + 1));
  for (std::size_t w = 0; w < count; ++w) {
    if (!std::getline(in, line)) throw ParseError(source + ": expected " + std::to_string(count) + " vectors");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(w + 2) + ": ";
    auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) throw ParseError(where + "malformed vector line");
    words.push_back(line.substr(0, sp));
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    for (int k = 0; k < dim; ++k) {
      while (p < end && *p == ' ') ++p;
      double v = 0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw ParseError(where + "bad number in component " + std::to_string(k + 1));
      vectors(k, static_cast<Eigen::Index>(w + 1)) = v;
      p = res.ptr;
    }
    while (p < end && *p == ' ') ++p;
    if (p != end) throw ParseError(where + "more than " + std::to_string(dim) + " components");
  }
  for (int k = 0; k < dim; ++k) vectors(k, 0) = uniform(rng, -1.0, 1.0);
  PretrainedEmbeddings out;
  out.vocab = TokenVocab(std::move(words));
  out.table.vectors = std::move(vectors);
  return out;
}

// ---------------------------------------------------------------------------
// Lookup and character encoder

inline Vec embed_token(std::string_view token, const TokenVocab& vocab, const TokenEmbeddingTable& table) {
  return table.vectors.col(static_cast<Eigen::Index>(vocab.index(token)));
}

inline std::vector<std::size_t> char_ids(const Token& token, const CharVocab& chars) {
  std::vector<std::size_t> ids;
  ids.reserve(token.chars.size());
  for (char32_t c : token.chars) ids.push_back(chars.index(c));
  return ids;
}

struct CharEncoding {
  std::vector<Vec> inputs;  // character embeddings in order
  BiLstmTrace trace;
  Vec forward;   // final state of the left-to-right pass
  Vec backward;  // final state of the right-to-left pass
};

// `char_table` is a dim x |charset| parameter, one column per character.
inline CharEncoding encode_chars(const ParamStore& store, ParamStore::Handle char_table, const BiLstmParams& lstm,
                                 const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode_chars: empty token");
  CharEncoding enc;
  const Mat& table = store.value(char_table);
  for (auto id : ids) enc.inputs.push_back(table.col(static_cast<Eigen::Index>(id)));
  enc.trace = bilstm_forward(store, lstm, enc.inputs);
  enc.forward = enc.trace.fwd.final_hidden();
  enc.backward = enc.trace.bwd.final_hidden();
  return enc;
}

inline void encode_chars_backward(ParamStore& store, ParamStore::Handle char_table, const BiLstmParams& lstm,
                                  const std::vector<std::size_t>& ids, const CharEncoding& enc,
                                  const Vec& d_forward, const Vec& d_backward) {
  const std::size_t n = ids.size();
  const Eigen::Index H = lstm.fwd.hidden;
  std::vector<Vec> dh(n, Vec::Zero(2 * H));
  dh[n - 1].head(H) = d_forward;
  dh[0].tail(H) = d_backward;
  auto dx = bilstm_backward(store, lstm, enc.trace, dh);
  Param& table = store[char_table];
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(ids[i]);
    table.grad.col(col) += dx[i];
    table.touch(col);
  }
}

// e_i = [V_t(x_i); forward char state; backward char state].
inline Vec input_embedding(const Vec& token_vec, const CharEncoding& enc) {
  Vec e(token_vec.size() + enc.forward.size() + enc.backward.size());
  e << token_vec, enc.forward, enc.backward;
  return e;
}

}  // namespace iocner
