#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iocner/corpus.hpp"
#include "iocner/netcore.hpp"

namespace iocner {

// Linear-chain CRF over L labels. Emissions are an n x L matrix (row i holds
// the scores p_i); transitions are (L+2) x (L+2) with BEGIN = L and END = L+1.
// With zero BEGIN/END rows the sequence score reduces to
//   sum_i p_i[y_i] + sum_{i>=2} T[y_{i-1}, y_i].

inline constexpr double kMaskedTransition = -1e4;

inline Eigen::Index crf_begin(Eigen::Index num_labels) { return num_labels; }
inline Eigen::Index crf_end(Eigen::Index num_labels) { return num_labels + 1; }

namespace detail {

inline void check_transitions(const Mat& emissions, const Mat& transitions) {
  const auto L = emissions.cols();
  if (transitions.rows() != L + 2 || transitions.cols() != L + 2) {
    throw std::invalid_argument("transition matrix must be (L+2)x(L+2)");
  }
  if (emissions.rows() < 1) throw std::invalid_argument("CRF needs at least one position");
}

inline double log_sum_exp(const Vec& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace detail

// 1 where a transition is permitted under BIO, 0 where it is masked.
// BEGIN is never a destination and END never a source.
inline Mat bio_transition_mask(const LabelScheme& scheme) {
  const int L = scheme.num_labels();
  const int B = L, E = L + 1;
  Mat mask = Mat::Ones(L + 2, L + 2);
  for (int to = 0; to < L; ++to) {
    for (int from = 0; from < L; ++from) {
      if (!bio_transition_allowed(from, to)) mask(from, to) = 0;
    }
    if (!bio_transition_allowed(-1, to)) mask(B, to) = 0;
  }
  mask.col(B).setZero();
  mask.row(E).setZero();
  mask(B, E) = 0;
  return mask;
}

inline void apply_transition_mask(Mat& transitions, const Mat& mask) {
  for (Eigen::Index c = 0; c < transitions.cols(); ++c)
    for (Eigen::Index r = 0; r < transitions.rows(); ++r)
      if (mask(r, c) == 0) transitions(r, c) = kMaskedTransition;
}

inline double sequence_score(const Mat& emissions, const std::vector<int>& labels, const Mat& transitions) {
  detail::check_transitions(emissions, transitions);
  if (labels.size() != static_cast<std::size_t>(emissions.rows())) {
    throw std::invalid_argument("sequence_score: label/emission length mismatch");
  }
  const auto L = emissions.cols();
  double s = transitions(crf_begin(L), labels.front()) + transitions(labels.back(), crf_end(L));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s += emissions(static_cast<Eigen::Index>(i), labels[i]);
    if (i > 0) s += transitions(labels[i - 1], labels[i]);
  }
  return s;
}

// Forward scores alpha (n x L) in log space.
inline Mat crf_forward(const Mat& emissions, const Mat& transitions) {
  detail::check_transitions(emissions, transitions);
  const auto n = emissions.rows(), L = emissions.cols();
  Mat alpha(n, L);
  alpha.row(0) = transitions.row(crf_begin(L)).head(L) + emissions.row(0);
  Vec tmp(L);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index t = 0; t < L; ++t) {
      tmp = alpha.row(i - 1).transpose() + transitions.col(t).head(L);
      alpha(i, t) = emissions(i, t) + detail::log_sum_exp(tmp);
    }
  }
  return alpha;
}

inline Mat crf_backward(const Mat& emissions, const Mat& transitions) {
  const auto n = emissions.rows(), L = emissions.cols();
  Mat beta(n, L);
  beta.row(n - 1) = transitions.col(crf_end(L)).head(L).transpose();
  Vec tmp(L);
  for (Eigen::Index i = n - 1; i-- > 0;) {
    for (Eigen::Index s = 0; s < L; ++s) {
      tmp = transitions.row(s).head(L).transpose() + emissions.row(i + 1).transpose() + beta.row(i + 1).transpose();
      beta(i, s) = detail::log_sum_exp(tmp);
    }
  }
  return beta;
}

inline double log_partition(const Mat& emissions, const Mat& transitions) {
  Mat alpha = crf_forward(emissions, transitions);
  const auto L = emissions.cols();
  Vec last = alpha.row(alpha.rows() - 1).transpose() + transitions.col(crf_end(L)).head(L);
  return detail::log_sum_exp(last);
}

struct CrfMarginals {
  double log_z = 0;
  Mat unary;        // n x L, P(y_i = t)
  Mat transitions;  // (L+2) x (L+2) expected transition counts
};

inline CrfMarginals crf_marginals(const Mat& emissions, const Mat& transitions) {
  const auto n = emissions.rows(), L = emissions.cols();
  const Mat alpha = crf_forward(emissions, transitions);
  const Mat beta = crf_backward(emissions, transitions);
  CrfMarginals m;
  Vec last = alpha.row(n - 1).transpose() + transitions.col(crf_end(L)).head(L);
  m.log_z = detail::log_sum_exp(last);
  m.unary = (alpha + beta).array() - m.log_z;
  m.unary = m.unary.array().exp();
  m.transitions = Mat::Zero(L + 2, L + 2);
  m.transitions.row(crf_begin(L)).head(L) = m.unary.row(0);
  m.transitions.col(crf_end(L)).head(L) = m.unary.row(n - 1).transpose();
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index t = 0; t < L; ++t) {
      const double right = emissions(i, t) + beta(i, t) - m.log_z;
      for (Eigen::Index s = 0; s < L; ++s) {
        m.transitions(s, t) += std::exp(alpha(i - 1, s) + transitions(s, t) + right);
      }
    }
  }
  return m;
}

struct CrfLoss {
  double loss = 0;
  Mat d_emissions;
  Mat d_transitions;
};

// Negative log-likelihood logZ - score(gold) with its gradients.
inline CrfLoss crf_nll(const Mat& emissions, const std::vector<int>& gold, const Mat& transitions) {
  detail::check_transitions(emissions, transitions);
  const auto L = emissions.cols();
  if (gold.size() != static_cast<std::size_t>(emissions.rows())) {
    throw std::invalid_argument("crf_nll: gold/emission length mismatch");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= L) {
      throw std::invalid_argument("crf_nll: gold label out of range at position " + std::to_string(i));
    }
  }
  CrfMarginals m = crf_marginals(emissions, transitions);
  CrfLoss out;
  out.loss = m.log_z - sequence_score(emissions, gold, transitions);
  out.d_emissions = std::move(m.unary);
  out.d_transitions = std::move(m.transitions);
  out.d_transitions(crf_begin(L), gold.front()) -= 1;
  out.d_transitions(gold.back(), crf_end(L)) -= 1;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.d_emissions(static_cast<Eigen::Index>(i), gold[i]) -= 1;
    if (i > 0) out.d_transitions(gold[i - 1], gold[i]) -= 1;
  }
  return out;
}

struct ViterbiResult {
  std::vector<int> labels;
  double score = 0;
};

// Ties go to the lower label index at every step.
inline ViterbiResult viterbi_decode(const Mat& emissions, const Mat& transitions) {
  detail::check_transitions(emissions, transitions);
  const auto n = emissions.rows(), L = emissions.cols();
  Mat delta(n, L);
  Eigen::MatrixXi back(n, L);
  delta.row(0) = transitions.row(crf_begin(L)).head(L) + emissions.row(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index t = 0; t < L; ++t) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Eigen::Index s = 0; s < L; ++s) {
        const double v = delta(i - 1, s) + transitions(s, t);
        if (v > best) {
          best = v;
          arg = static_cast<int>(s);
        }
      }
      delta(i, t) = best + emissions(i, t);
      back(i, t) = arg;
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (Eigen::Index t = 0; t < L; ++t) {
    const double v = delta(n - 1, t) + transitions(t, crf_end(L));
    if (v > best) {
      best = v;
      arg = static_cast<int>(t);
    }
  }
  ViterbiResult r;
  r.score = best;
  r.labels.assign(static_cast<std::size_t>(n), 0);
  r.labels.back() = arg;
  for (Eigen::Index i = n - 1; i > 0; --i) {
    r.labels[static_cast<std::size_t>(i - 1)] = back(i, r.labels[static_cast<std::size_t>(i)]);
  }
  return r;
}

}  // namespace iocner
