#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iocner/corpus.hpp"
#include "iocner/crf.hpp"
#include "iocner/embeddings.hpp"
#include "iocner/error.hpp"
#include "iocner/features.hpp"
#include "iocner/netcore.hpp"

namespace iocner {

struct ModelDims {
  int token_dim = 100;
  int char_dim = 25;
  int char_hidden = 25;
  int word_hidden = 100;
  int attention = 100;
  int ffn_hidden = 100;
  // Off gives the ablation without spelling features: o_i = [h_i; s].
  bool use_features = true;

  int embedding_size() const { return token_dim + 2 * char_hidden; }
  int output_size() const { return 4 * word_hidden + (use_features ? static_cast<int>(kNumFeatures) : 0); }

  bool operator==(const ModelDims&) const = default;
};

// A sentence mapped to vocabulary ids and raw feature vectors once, so the
// regex features are not recomputed every epoch.
struct PreparedSentence {
  std::vector<std::size_t> token_ids;
  std::vector<std::vector<std::size_t>> char_ids;
  std::vector<Vec> features;
  std::vector<int> gold;  // empty when unlabelled

  std::size_t size() const { return token_ids.size(); }
};

// Intermediate values of one forward pass, kept for the backward pass.
struct ForwardCache {
  std::vector<CharEncoding> chars;
  std::vector<Vec> dropout_mask;
  std::vector<Vec> word_inputs;
  BiLstmTrace word;
  AttentionResult attention;
  std::vector<Vec> outputs;
  std::vector<FfnResult> ffn;
  Mat emissions;
};

class Tagger {
 public:
  // Token vectors come from `pretrained` when given (its vocabulary must be
  // `vocab`); every other tensor is drawn uniform [-1, 1] from `seed`.
  Tagger(LabelScheme scheme, ModelDims dims, TokenVocab vocab, CharVocab chars, FeatureConfig features,
         std::uint64_t seed, const TokenEmbeddingTable* pretrained = nullptr)
      : scheme_(std::move(scheme)),
        dims_(dims),
        vocab_(std::move(vocab)),
        chars_(std::move(chars)),
        features_(std::move(features)) {
    Rng rng(seed);
    const int L = scheme_.num_labels();

    Mat tok = uniform_matrix(dims_.token_dim, static_cast<Eigen::Index>(vocab_.size()), 1.0, rng);
    if (pretrained) {
      if (pretrained->dim() != dims_.token_dim) {
        throw Error("pretrained embedding dimension " + std::to_string(pretrained->dim()) +
                    " does not match token dimension " + std::to_string(dims_.token_dim));
      }
      if (pretrained->vectors.cols() != static_cast<Eigen::Index>(vocab_.size())) {
        throw Error("pretrained table does not match vocabulary size");
      }
      tok = pretrained->vectors;
    }
    token_table_ = params_.add("embed.token", std::move(tok), true);
    char_table_ = params_.add(
        "embed.char", uniform_matrix(dims_.char_dim, static_cast<Eigen::Index>(chars_.size()), 1.0, rng), true);
    char_lstm_ = add_bilstm(params_, "char_lstm", dims_.char_dim, dims_.char_hidden, rng);
    word_lstm_ = add_bilstm(params_, "word_lstm", dims_.embedding_size(), dims_.word_hidden, rng);
    attention_ = add_attention(params_, "attention", 2 * dims_.word_hidden, dims_.attention, rng);
    if (dims_.use_features) {
      feat_w_ = params_.add("features.w", Mat::Identity(kNumFeatures, kNumFeatures));
      feat_b_ = params_.add("features.b", Mat::Zero(kNumFeatures, 1));
    }
    ffn_ = add_ffn(params_, "ffn", dims_.output_size(), dims_.ffn_hidden, L, rng);
    mask_ = bio_transition_mask(scheme_);
    Mat trans = uniform_matrix(L + 2, L + 2, 1.0, rng);
    apply_transition_mask(trans, mask_);
    transitions_ = params_.add("crf.transitions", std::move(trans));
    params_[transitions_].update_mask = mask_;
  }

  const LabelScheme& scheme() const { return scheme_; }
  const ModelDims& dims() const { return dims_; }
  const TokenVocab& vocab() const { return vocab_; }
  const CharVocab& chars() const { return chars_; }
  const FeatureConfig& feature_config() const { return features_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Mat& transitions() const { return params_.value(transitions_); }
  const Mat& transition_mask() const { return mask_; }

  PreparedSentence prepare(const Sentence& s) const {
    PreparedSentence p;
    p.token_ids.reserve(s.size());
    for (const auto& t : s.tokens) {
      p.token_ids.push_back(vocab_.index(t.surface));
      p.char_ids.push_back(char_ids(t, chars_));
      p.features.push_back(to_eigen(compute_features(t, features_)));
    }
    if (s.gold_labels) {
      for (int y : *s.gold_labels) {
        if (y < 0 || y >= scheme_.num_labels()) throw SchemeError("gold label index out of range");
      }
      p.gold = *s.gold_labels;
    }
    return p;
  }

  // Dropout is active iff `dropout_rng` is non-null.
  ForwardCache forward(const PreparedSentence& s, Rng* dropout_rng = nullptr, double dropout_p = 0.0) const {
    const std::size_t n = s.size();
    if (n == 0) throw std::invalid_argument("cannot run the tagger on an empty sentence");
    ForwardCache c;
    c.chars.reserve(n);
    const Mat& tok = params_.value(token_table_);
    for (std::size_t i = 0; i < n; ++i) {
      c.chars.push_back(encode_chars(params_, char_table_, char_lstm_, s.char_ids[i]));
      Vec e = input_embedding(tok.col(static_cast<Eigen::Index>(s.token_ids[i])), c.chars.back());
      Rng dummy;
      DropoutResult d = dropout(e, dropout_p, dropout_rng ? *dropout_rng : dummy, dropout_rng != nullptr);
      c.word_inputs.push_back(std::move(d.out));
      c.dropout_mask.push_back(std::move(d.mask));
    }
    c.word = bilstm_forward(params_, word_lstm_, c.word_inputs);
    c.attention = attention(params_, attention_, c.word.h);
    const int L = scheme_.num_labels();
    c.emissions.resize(static_cast<Eigen::Index>(n), L);
    for (std::size_t i = 0; i < n; ++i) {
      Vec f(0);
      if (dims_.use_features) f = project_features(s.features[i], params_.value(feat_w_), params_.value(feat_b_).col(0));
      c.outputs.push_back(output_vector(c.word.h[i], c.attention.s, f));
      c.ffn.push_back(ffn_forward(params_, ffn_, c.outputs.back()));
      c.emissions.row(static_cast<Eigen::Index>(i)) = c.ffn.back().logits.transpose();
    }
    return c;
  }

  Mat emissions(const PreparedSentence& s) const { return forward(s).emissions; }

  // Negative log-likelihood of the gold labels without dropout.
  double loss(const PreparedSentence& s) const {
    require_gold(s);
    ForwardCache c = forward(s);
    return crf_nll(c.emissions, s.gold, transitions()).loss;
  }

  // Runs forward and backward, accumulating into the parameter gradients.
  double loss_and_grad(const PreparedSentence& s, Rng* dropout_rng = nullptr, double dropout_p = 0.0) {
    require_gold(s);
    ForwardCache c = forward(s, dropout_rng, dropout_p);
    CrfLoss crf = crf_nll(c.emissions, s.gold, transitions());
    params_.grad(transitions_) += crf.d_transitions;
    backward(s, c, crf.d_emissions);
    return crf.loss;
  }

  std::vector<int> decode(const PreparedSentence& s) const {
    return viterbi_decode(emissions(s), transitions()).labels;
  }

  std::vector<int> tag(const Sentence& s) const {
    if (s.tokens.empty()) return {};
    return decode(prepare(s));
  }

 private:
  void require_gold(const PreparedSentence& s) const {
    if (s.gold.size() != s.size()) throw std::invalid_argument("sentence has no gold labels");
    if (auto bad = first_bio_violation(s.gold)) {
      throw ParseError("gold labels are not BIO-valid at position " + std::to_string(*bad));
    }
  }

  void backward(const PreparedSentence& s, const ForwardCache& c, const Mat& d_emissions) {
    const std::size_t n = s.size();
    const Eigen::Index H2 = 2 * dims_.word_hidden;
    std::vector<Vec> dh(n);
    Vec ds = Vec::Zero(H2);
    for (std::size_t i = 0; i < n; ++i) {
      Vec d_logits = d_emissions.row(static_cast<Eigen::Index>(i)).transpose();
      Vec d_o = ffn_backward(params_, ffn_, c.outputs[i], c.ffn[i], d_logits);
      dh[i] = d_o.head(H2);
      ds += d_o.segment(H2, H2);
      if (dims_.use_features) {
        project_features_backward(s.features[i], params_.value(feat_w_), d_o.tail(kNumFeatures),
                                  params_.grad(feat_w_), params_.grad(feat_b_).col(0));
      }
    }
    auto dh_att = attention_backward(params_, attention_, c.word.h, c.attention, ds);
    for (std::size_t i = 0; i < n; ++i) dh[i] += dh_att[i];
    auto dx = bilstm_backward(params_, word_lstm_, c.word, dh);

    Param& tok = params_[token_table_];
    const Eigen::Index T = dims_.token_dim, C = dims_.char_hidden;
    for (std::size_t i = 0; i < n; ++i) {
      Vec de = dx[i].cwiseProduct(c.dropout_mask[i]);
      const auto col = static_cast<Eigen::Index>(s.token_ids[i]);
      tok.grad.col(col) += de.head(T);
      tok.touch(col);
      encode_chars_backward(params_, char_table_, char_lstm_, s.char_ids[i], c.chars[i], de.segment(T, C),
                            de.tail(C));
    }
  }

  LabelScheme scheme_;
  ModelDims dims_;
  TokenVocab vocab_;
  CharVocab chars_;
  FeatureConfig features_;
  ParamStore params_;
  ParamStore::Handle token_table_ = 0, char_table_ = 0, feat_w_ = 0, feat_b_ = 0, transitions_ = 0;
  BiLstmParams char_lstm_, word_lstm_;
  AttentionParams attention_;
  FfnParams ffn_;
  Mat mask_;
};

}  // namespace iocner
