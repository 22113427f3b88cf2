#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "iocner/corpus.hpp"
#include "iocner/embeddings.hpp"
#include "iocner/error.hpp"
#include "iocner/eval.hpp"
#include "iocner/features.hpp"
#include "iocner/model.hpp"
#include "iocner/netcore.hpp"

namespace iocner {

struct TrainConfig {
  double learning_rate = 0.005;
  double clip_norm = 5.0;
  double dropout = 0.5;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 1;
  ModelDims dims;
  // Validation decoding threads; results do not depend on this.
  int workers = 1;

  void validate() const {
    if (!(learning_rate > 0) || !(clip_norm > 0) || max_epochs <= 0 || patience <= 0 || workers <= 0) {
      throw std::invalid_argument("training configuration values must be positive");
    }
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("dropout must be in [0, 1)");
    if (patience > max_epochs) throw std::invalid_argument("patience must not exceed max_epochs");
    if (dims.token_dim <= 0 || dims.char_dim <= 0 || dims.char_hidden <= 0 || dims.word_hidden <= 0 ||
        dims.attention <= 0 || dims.ffn_hidden <= 0) {
      throw std::invalid_argument("model dimensions must be positive");
    }
  }

  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;  // mean sentence loss over the epoch
  double val_f1 = 0;
  double seconds = 0;
  bool best = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_f1 = 0;
};

struct TrainResult {
  Tagger model;
  TrainHistory history;
};

struct TrainHooks {
  // Replaces the default validation score (span-level micro F1 on the
  // validation set).
  std::function<double(const Tagger&, int epoch)> validation_score;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Global-norm clipping over every parameter. Returns the factor applied.
inline double clip_gradients(ParamStore& store, double max_norm = 5.0) {
  const double norm = store.grad_norm();
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm <= max_norm) return 1.0;
  const double factor = max_norm / norm;
  store.scale_grad(factor);
  return factor;
}

// Viterbi labels for every sentence; output order matches input order for
// any worker count.
inline std::vector<std::vector<int>> decode_all(const Tagger& model, const std::vector<PreparedSentence>& sentences,
                                                int workers = 1) {
  std::vector<std::vector<int>> out(sentences.size());
  auto run = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < sentences.size(); i += step) {
      if (sentences[i].size() > 0) out[i] = model.decode(sentences[i]);
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1 || sentences.size() < 2) {
    run(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(run, w, n);
  for (auto& t : pool) t.join();
  return out;
}

inline std::vector<std::vector<int>> tag_all(const Tagger& model, const std::vector<Sentence>& sentences,
                                             int workers = 1) {
  std::vector<PreparedSentence> prepared;
  prepared.reserve(sentences.size());
  for (const auto& s : sentences) prepared.push_back(model.prepare(s));
  return decode_all(model, prepared, workers);
}

// Training-set vocabulary ordered by descending frequency, then lexicographically.
inline TokenVocab vocab_from_sentences(const std::vector<Sentence>& sentences) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens) ++counts[t.surface];
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& kv : items) words.push_back(std::move(kv.first));
  return TokenVocab(std::move(words));
}

// Plain SGD, one sentence per step, global-norm clipping, inverted dropout on
// the word-LSTM inputs, and early stopping on validation F1 (strict
// improvement only). Returns the best-scoring parameters, not the last.
inline TrainResult train(const std::vector<Sentence>& train_set, const std::vector<Sentence>& val_set,
                         const TrainConfig& cfg, const PretrainedEmbeddings* pretrained = nullptr,
                         const FeatureConfig& features = FeatureConfig::bundled(),
                         const LabelScheme& scheme = LabelScheme{}, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train_set.empty()) throw EmptyCorpusError("training set is empty");
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    if (!train_set[i].gold_labels) throw SchemeError("training sentence " + std::to_string(i + 1) + " has no labels");
    if (train_set[i].tokens.empty()) throw EmptyCorpusError("training sentence " + std::to_string(i + 1) + " is empty");
  }

  TokenVocab vocab = pretrained ? pretrained->vocab : vocab_from_sentences(train_set);
  TrainResult result{Tagger(scheme, cfg.dims, std::move(vocab), CharVocab::from_sentences(train_set), features,
                            cfg.seed, pretrained ? &pretrained->table : nullptr),
                     TrainHistory{}};
  Tagger& model = result.model;

  std::vector<PreparedSentence> train_prep, val_prep;
  for (const auto& s : train_set) train_prep.push_back(model.prepare(s));
  std::vector<std::vector<int>> val_gold;
  for (const auto& s : val_set) {
    val_prep.push_back(model.prepare(s));
    val_gold.push_back(s.gold_labels ? *s.gold_labels : std::vector<int>(s.size(), LabelScheme::outside()));
  }
  auto score = [&](const Tagger& m, int epoch) {
    if (hooks.validation_score) return hooks.validation_score(m, epoch);
    if (val_prep.empty()) return 0.0;
    return entity_prf(val_gold, decode_all(m, val_prep, cfg.workers), scheme).micro.f1;
  };

  Rng order_rng(cfg.seed ^ 0x5DEECE66DULL);
  Rng dropout_rng(cfg.seed ^ 0xB5297A4D3F84D5B5ULL);
  std::vector<std::size_t> order(train_prep.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Mat> best_params = model.params().snapshot();
  double best_f1 = -1;
  int since_best = 0;
  ParamStore& store = model.params();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(order_rng, i)]);
    double total = 0;
    for (std::size_t k : order) {
      store.zero_grad();
      const double loss = model.loss_and_grad(train_prep[k], &dropout_rng, cfg.dropout);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", training sentence " +
                           std::to_string(k + 1));
      }
      store.mask_grad();
      clip_gradients(store, cfg.clip_norm);
      store.sgd_step(cfg.learning_rate);
      total += loss;
    }
    store.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(train_prep.size());
    rec.val_f1 = score(model, epoch);
    rec.best = rec.val_f1 > best_f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.best) {
      best_f1 = rec.val_f1;
      best_params = store.snapshot();
      result.history.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.history.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (since_best >= cfg.patience) break;
  }
  result.history.best_val_f1 = best_f1;
  store.restore(best_params);
  return result;
}

}  // namespace iocner
