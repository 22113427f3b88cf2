#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "iocner/error.hpp"

namespace iocner {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Platform-independent draws; std::uniform_real_distribution is not
// guaranteed to produce the same stream across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

inline Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double range, Rng& rng) {
  Mat m(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uniform(rng, -range, range);
  return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Parameter store

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  // Embedding tables keep one entry per column; only touched columns carry
  // gradient, so clearing and updating skip the rest.
  bool column_sparse = false;
  std::vector<Eigen::Index> touched;
  std::vector<char> touched_flag;
  // Empty means every entry is trainable; otherwise entries with 0 are frozen.
  Mat update_mask;

  void touch(Eigen::Index col) {
    if (!column_sparse) return;
    if (!touched_flag[static_cast<std::size_t>(col)]) {
      touched_flag[static_cast<std::size_t>(col)] = 1;
      touched.push_back(col);
    }
  }
};

class ParamStore {
 public:
  using Handle = std::size_t;

  Handle add(std::string name, Mat init, bool column_sparse = false) {
    for (const auto& p : params_) {
      if (p.name == name) throw std::invalid_argument("parameter '" + name + "' registered twice");
    }
    Param p;
    p.name = std::move(name);
    p.grad = Mat::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    p.column_sparse = column_sparse;
    if (column_sparse) p.touched_flag.assign(static_cast<std::size_t>(p.value.cols()), 0);
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Param& operator[](Handle h) { return params_.at(h); }
  const Param& operator[](Handle h) const { return params_.at(h); }
  const Mat& value(Handle h) const { return params_.at(h).value; }
  Mat& grad(Handle h) { return params_.at(h).grad; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Param* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) {
      if (p.column_sparse) {
        for (auto c : p.touched) {
          p.grad.col(c).setZero();
          p.touched_flag[static_cast<std::size_t>(c)] = 0;
        }
        p.touched.clear();
      } else {
        p.grad.setZero();
      }
    }
  }

  void mask_grad() {
    for (auto& p : params_) {
      if (p.update_mask.size() != 0) p.grad.array() *= p.update_mask.array();
    }
  }

  double grad_squared_norm() const {
    double sum = 0;
    for (const auto& p : params_) {
      if (p.column_sparse) {
        for (auto c : p.touched) sum += p.grad.col(c).squaredNorm();
      } else {
        sum += p.grad.squaredNorm();
      }
    }
    return sum;
  }

  double grad_norm() const { return std::sqrt(grad_squared_norm()); }

  void scale_grad(double factor) {
    for (auto& p : params_) {
      if (p.column_sparse) {
        for (auto c : p.touched) p.grad.col(c) *= factor;
      } else {
        p.grad *= factor;
      }
    }
  }

  // Plain SGD step; frozen entries (update_mask == 0) never move.
  void sgd_step(double lr) {
    for (auto& p : params_) {
      if (p.column_sparse) {
        for (auto c : p.touched) p.value.col(c) -= lr * p.grad.col(c);
      } else if (p.update_mask.size() != 0) {
        p.value.array() -= lr * (p.grad.array() * p.update_mask.array());
      } else {
        p.value -= lr * p.grad;
      }
    }
  }

  std::vector<Mat> snapshot() const {
    std::vector<Mat> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<Mat>& values) {
    if (values.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].rows() != params_[i].value.rows() || values[i].cols() != params_[i].value.cols()) {
        throw std::invalid_argument("snapshot shape mismatch for " + params_[i].name);
      }
      params_[i].value = values[i];
    }
  }

 private:
  std::vector<Param> params_;
};

// ---------------------------------------------------------------------------
// LSTM (no peepholes). Gate rows are stacked as [input; forget; output; cell].

struct LstmParams {
  ParamStore::Handle wx = 0, wh = 0, b = 0;
  int input_size = 0;
  int hidden = 0;
};

inline LstmParams add_lstm(ParamStore& store, const std::string& prefix, int input_size, int hidden, Rng& rng,
                           double init_range = 1.0, double forget_bias = 1.0) {
  LstmParams p;
  p.input_size = input_size;
  p.hidden = hidden;
  p.wx = store.add(prefix + ".wx", uniform_matrix(4 * hidden, input_size, init_range, rng));
  p.wh = store.add(prefix + ".wh", uniform_matrix(4 * hidden, hidden, init_range, rng));
  Mat b = uniform_matrix(4 * hidden, 1, init_range, rng);
  b.block(hidden, 0, hidden, 1).array() += forget_bias;
  p.b = store.add(prefix + ".b", std::move(b));
  return p;
}

struct LstmStep {
  Vec x, h_prev, c_prev, i, f, o, g, c, h;
};

// steps[k] is the k-th processed element; with `reversed` that is original
// position n-1-k.
struct LstmTrace {
  std::vector<LstmStep> steps;
  bool reversed = false;

  std::size_t position_of(std::size_t k) const { return reversed ? steps.size() - 1 - k : k; }
  const Vec& hidden_at(std::size_t pos) const { return steps[reversed ? steps.size() - 1 - pos : pos].h; }
  const Vec& final_hidden() const { return steps.back().h; }
};

inline LstmTrace lstm_forward(const ParamStore& store, const LstmParams& p, const std::vector<Vec>& xs,
                              bool reversed) {
  const Mat& wx = store.value(p.wx);
  const Mat& wh = store.value(p.wh);
  const Mat& b = store.value(p.b);
  const Eigen::Index H = p.hidden;
  LstmTrace tr;
  tr.reversed = reversed;
  tr.steps.reserve(xs.size());
  Vec h = Vec::Zero(H), c = Vec::Zero(H);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Vec& x = xs[reversed ? xs.size() - 1 - k : k];
    Vec z = wx * x + wh * h + b.col(0);
    LstmStep s;
    s.x = x;
    s.h_prev = h;
    s.c_prev = c;
    s.i = z.segment(0, H).unaryExpr([](double v) { return sigmoid(v); });
    s.f = z.segment(H, H).unaryExpr([](double v) { return sigmoid(v); });
    s.o = z.segment(2 * H, H).unaryExpr([](double v) { return sigmoid(v); });
    s.g = z.segment(3 * H, H).array().tanh();
    s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.h = s.o.cwiseProduct(s.c.array().tanh().matrix());
    h = s.h;
    c = s.c;
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

// dh[pos] is the external gradient on the hidden state at original position
// pos. Accumulates parameter gradients and returns dL/dx per original position.
inline std::vector<Vec> lstm_backward(ParamStore& store, const LstmParams& p, const LstmTrace& tr,
                                      const std::vector<Vec>& dh) {
  const Mat& wx = store.value(p.wx);
  const Mat& wh = store.value(p.wh);
  Mat& gwx = store.grad(p.wx);
  Mat& gwh = store.grad(p.wh);
  Mat& gb = store.grad(p.b);
  const Eigen::Index H = p.hidden;
  const std::size_t n = tr.steps.size();
  std::vector<Vec> dx(n);
  Vec dh_carry = Vec::Zero(H), dc_carry = Vec::Zero(H);
  Vec dz(4 * H);
  for (std::size_t k = n; k-- > 0;) {
    const LstmStep& s = tr.steps[k];
    const std::size_t pos = tr.position_of(k);
    Vec dh_t = dh[pos] + dh_carry;
    Vec tc = s.c.array().tanh();
    Vec d_o = dh_t.cwiseProduct(tc);
    Vec dc = dh_t.cwiseProduct(s.o).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_carry;
    Vec di = dc.cwiseProduct(s.g);
    Vec dg = dc.cwiseProduct(s.i);
    Vec df = dc.cwiseProduct(s.c_prev);
    dc_carry = dc.cwiseProduct(s.f);
    dz.segment(0, H) = di.array() * s.i.array() * (1.0 - s.i.array());
    dz.segment(H, H) = df.array() * s.f.array() * (1.0 - s.f.array());
    dz.segment(2 * H, H) = d_o.array() * s.o.array() * (1.0 - s.o.array());
    dz.segment(3 * H, H) = dg.array() * (1.0 - s.g.array().square());
    gwx.noalias() += dz * s.x.transpose();
    gwh.noalias() += dz * s.h_prev.transpose();
    gb.col(0) += dz;
    dx[pos] = wx.transpose() * dz;
    dh_carry = wh.transpose() * dz;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM

struct BiLstmParams {
  LstmParams fwd, bwd;
};

inline BiLstmParams add_bilstm(ParamStore& store, const std::string& prefix, int input_size, int hidden, Rng& rng,
                               double init_range = 1.0, double forget_bias = 1.0) {
  BiLstmParams p;
  p.fwd = add_lstm(store, prefix + ".fwd", input_size, hidden, rng, init_range, forget_bias);
  p.bwd = add_lstm(store, prefix + ".bwd", input_size, hidden, rng, init_range, forget_bias);
  return p;
}

struct BiLstmTrace {
  LstmTrace fwd, bwd;
  std::vector<Vec> h;  // [forward_i; backward_i], length 2H
};

inline BiLstmTrace bilstm_forward(const ParamStore& store, const BiLstmParams& p, const std::vector<Vec>& xs) {
  if (xs.empty()) throw std::invalid_argument("bilstm_encode: empty sequence");
  BiLstmTrace tr;
  tr.fwd = lstm_forward(store, p.fwd, xs, false);
  tr.bwd = lstm_forward(store, p.bwd, xs, true);
  const Eigen::Index H = p.fwd.hidden;
  tr.h.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Vec h(2 * H);
    h << tr.fwd.hidden_at(i), tr.bwd.hidden_at(i);
    tr.h.push_back(std::move(h));
  }
  return tr;
}

inline std::vector<Vec> bilstm_encode(const ParamStore& store, const BiLstmParams& p, const std::vector<Vec>& xs) {
  return bilstm_forward(store, p, xs).h;
}

inline std::vector<Vec> bilstm_backward(ParamStore& store, const BiLstmParams& p, const BiLstmTrace& tr,
                                        const std::vector<Vec>& dh) {
  const Eigen::Index H = p.fwd.hidden;
  std::vector<Vec> dfwd(dh.size()), dbwd(dh.size());
  for (std::size_t i = 0; i < dh.size(); ++i) {
    dfwd[i] = dh[i].head(H);
    dbwd[i] = dh[i].tail(H);
  }
  auto dx = lstm_backward(store, p.fwd, tr.fwd, dfwd);
  auto dx2 = lstm_backward(store, p.bwd, tr.bwd, dbwd);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx2[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Attention: u_i = tanh(W h_i + b), alpha = softmax(u_i . u_w), s = sum alpha_i h_i

struct AttentionParams {
  ParamStore::Handle w = 0, b = 0, u = 0;
  int size = 0;
};

inline AttentionParams add_attention(ParamStore& store, const std::string& prefix, int input_size, int size,
                                     Rng& rng, double init_range = 1.0) {
  AttentionParams p;
  p.size = size;
  p.w = store.add(prefix + ".w", uniform_matrix(size, input_size, init_range, rng));
  p.b = store.add(prefix + ".b", uniform_matrix(size, 1, init_range, rng));
  p.u = store.add(prefix + ".u", uniform_matrix(size, 1, init_range, rng));
  return p;
}

struct AttentionResult {
  std::vector<Vec> u;
  Vec alpha;
  Vec s;
};

inline AttentionResult attention(const ParamStore& store, const AttentionParams& p, const std::vector<Vec>& hs) {
  if (hs.empty()) throw std::invalid_argument("attention: empty sequence");
  const Mat& w = store.value(p.w);
  const Mat& b = store.value(p.b);
  const Mat& uw = store.value(p.u);
  const std::size_t n = hs.size();
  AttentionResult r;
  r.u.reserve(n);
  Vec scores(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    r.u.push_back((w * hs[i] + b.col(0)).array().tanh().matrix());
    scores[static_cast<Eigen::Index>(i)] = r.u.back().dot(uw.col(0));
  }
  const double mx = scores.maxCoeff();
  r.alpha = (scores.array() - mx).exp().matrix();
  r.alpha /= r.alpha.sum();
  r.s = Vec::Zero(hs[0].size());
  for (std::size_t i = 0; i < n; ++i) r.s += r.alpha[static_cast<Eigen::Index>(i)] * hs[i];
  return r;
}

// Returns dL/dh_i given dL/ds; accumulates W, b, u_w gradients.
inline std::vector<Vec> attention_backward(ParamStore& store, const AttentionParams& p, const std::vector<Vec>& hs,
                                           const AttentionResult& r, const Vec& ds) {
  const Mat& w = store.value(p.w);
  const Mat& uw = store.value(p.u);
  Mat& gw = store.grad(p.w);
  Mat& gb = store.grad(p.b);
  Mat& gu = store.grad(p.u);
  const std::size_t n = hs.size();
  Vec dalpha(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) dalpha[static_cast<Eigen::Index>(i)] = ds.dot(hs[i]);
  const double mean = r.alpha.dot(dalpha);
  std::vector<Vec> dh(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double a = r.alpha[ii];
    const double dscore = a * (dalpha[ii] - mean);
    gu.col(0) += dscore * r.u[i];
    Vec dz = (dscore * uw.col(0)).cwiseProduct((1.0 - r.u[i].array().square()).matrix());
    gw.noalias() += dz * hs[i].transpose();
    gb.col(0) += dz;
    dh[i] = w.transpose() * dz + a * ds;
  }
  return dh;
}

// ---------------------------------------------------------------------------
// Output vector and feed-forward scorer

inline Vec output_vector(const Vec& h, const Vec& s, const Vec& f) {
  Vec o(h.size() + s.size() + f.size());
  o << h, s, f;
  return o;
}

struct FfnParams {
  ParamStore::Handle w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  int input_size = 0, hidden = 0, output_size = 0;
};

inline FfnParams add_ffn(ParamStore& store, const std::string& prefix, int input_size, int hidden, int output_size,
                         Rng& rng, double init_range = 1.0) {
  FfnParams p;
  p.input_size = input_size;
  p.hidden = hidden;
  p.output_size = output_size;
  p.w1 = store.add(prefix + ".w1", uniform_matrix(hidden, input_size, init_range, rng));
  p.b1 = store.add(prefix + ".b1", uniform_matrix(hidden, 1, init_range, rng));
  p.w2 = store.add(prefix + ".w2", uniform_matrix(output_size, hidden, init_range, rng));
  p.b2 = store.add(prefix + ".b2", uniform_matrix(output_size, 1, init_range, rng));
  return p;
}

struct FfnResult {
  Vec hidden;  // tanh activations
  Vec logits;
};

inline FfnResult ffn_forward(const ParamStore& store, const FfnParams& p, const Vec& o) {
  FfnResult r;
  r.hidden = (store.value(p.w1) * o + store.value(p.b1).col(0)).array().tanh();
  r.logits = store.value(p.w2) * r.hidden + store.value(p.b2).col(0);
  return r;
}

inline Vec ffn_logits(const ParamStore& store, const FfnParams& p, const Vec& o) {
  return ffn_forward(store, p, o).logits;
}

inline Vec ffn_backward(ParamStore& store, const FfnParams& p, const Vec& o, const FfnResult& r,
                        const Vec& dlogits) {
  store.grad(p.w2).noalias() += dlogits * r.hidden.transpose();
  store.grad(p.b2).col(0) += dlogits;
  Vec dz = (store.value(p.w2).transpose() * dlogits).cwiseProduct((1.0 - r.hidden.array().square()).matrix());
  store.grad(p.w1).noalias() += dz * o.transpose();
  store.grad(p.b1).col(0) += dz;
  return store.value(p.w1).transpose() * dz;
}

// ---------------------------------------------------------------------------
// Inverted dropout

struct DropoutResult {
  Vec out;
  Vec mask;  // 0 or 1/(1-p); all ones at inference
};

inline DropoutResult dropout(const Vec& v, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
  DropoutResult r;
  r.mask = Vec::Ones(v.size());
  if (training && p > 0.0) {
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < v.size(); ++i) r.mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
  }
  r.out = v.cwiseProduct(r.mask);
  return r;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0;
  double numeric = 0;
  std::size_t coordinates = 0;
};

// `loss_with_grads` must return the loss and accumulate analytic gradients
// into the store. Relative error per coordinate is
// |a - n| / max(|a|, |n|, abs_floor); the floor keeps round-off on
// near-zero gradients from dominating.
inline GradCheckReport grad_check(const std::function<double(ParamStore&)>& loss_with_grads, ParamStore& store,
                                  double eps = 1e-5, double abs_floor = 1e-4) {
  store.zero_grad();
  const double base = loss_with_grads(store);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  std::vector<Mat> analytic;
  for (const auto& p : store) analytic.push_back(p.grad);

  GradCheckReport rep;
  for (std::size_t t = 0; t < store.size(); ++t) {
    Param& p = store[t];
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double orig = p.value.data()[k];
      p.value.data()[k] = orig + eps;
      store.zero_grad();
      const double up = loss_with_grads(store);
      p.value.data()[k] = orig - eps;
      store.zero_grad();
      const double down = loss_with_grads(store);
      p.value.data()[k] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite loss");
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[t].data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.coordinates;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = p.name;
        rep.worst_index = k;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return rep;
}

}  // namespace iocner
