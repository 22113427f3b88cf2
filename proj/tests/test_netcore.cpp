#include <gtest/gtest.h>

#include <cmath>

#include "iocner/netcore.hpp"

using namespace iocner;

namespace {

std::vector<Vec> random_inputs(std::size_t n, int dim, Rng& rng) {
  std::vector<Vec> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(uniform_matrix(dim, 1, 1.0, rng).col(0));
  return xs;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar loops over the textbook LSTM equations, independent of the Eigen code.
std::vector<std::vector<double>> longhand_lstm(const Mat& wx, const Mat& wh, const Mat& b, const std::vector<Vec>& xs,
                                               int H) {
  std::vector<double> h(static_cast<std::size_t>(H), 0.0), c(static_cast<std::size_t>(H), 0.0);
  std::vector<std::vector<double>> out;
  for (const auto& x : xs) {
    std::vector<double> z(static_cast<std::size_t>(4 * H));
    for (int r = 0; r < 4 * H; ++r) {
      double acc = b(r, 0);
      for (int k = 0; k < x.size(); ++k) acc += wx(r, k) * x[k];
      for (int k = 0; k < H; ++k) acc += wh(r, k) * h[static_cast<std::size_t>(k)];
      z[static_cast<std::size_t>(r)] = acc;
    }
    std::vector<double> nh(static_cast<std::size_t>(H));
    for (int k = 0; k < H; ++k) {
      const auto u = static_cast<std::size_t>(k);
      const double ig = sig(z[u]);
      const double fg = sig(z[u + static_cast<std::size_t>(H)]);
      const double og = sig(z[u + 2 * static_cast<std::size_t>(H)]);
      const double gg = std::tanh(z[u + 3 * static_cast<std::size_t>(H)]);
      c[u] = fg * c[u] + ig * gg;
      nh[u] = og * std::tanh(c[u]);
    }
    h = nh;
    out.push_back(h);
  }
  return out;
}

}  // namespace

TEST(Lstm, MatchesLongHandRecurrence) {
  Rng rng(1);
  ParamStore store;
  auto p = add_bilstm(store, "l", 3, 2, rng);
  auto xs = random_inputs(3, 3, rng);
  auto hs = bilstm_encode(store, p, xs);
  auto fwd = longhand_lstm(store.value(p.fwd.wx), store.value(p.fwd.wh), store.value(p.fwd.b), xs, 2);
  std::vector<Vec> rev(xs.rbegin(), xs.rend());
  auto bwd = longhand_lstm(store.value(p.bwd.wx), store.value(p.bwd.wh), store.value(p.bwd.b), rev, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(hs[i].size(), 4);
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(hs[i][k], fwd[i][static_cast<std::size_t>(k)], 1e-14);
      EXPECT_NEAR(hs[i][2 + k], bwd[2 - i][static_cast<std::size_t>(k)], 1e-14);
    }
  }
}

TEST(Lstm, ForgetBiasOffset) {
  Rng a(3), b(3);
  ParamStore s1, s2;
  auto p1 = add_lstm(s1, "x", 2, 3, a, 1.0, 1.0);
  auto p2 = add_lstm(s2, "x", 2, 3, b, 1.0, 0.0);
  Mat diff = s1.value(p1.b) - s2.value(p2.b);
  EXPECT_TRUE(diff.block(0, 0, 3, 1).isZero(0));
  EXPECT_TRUE((diff.block(3, 0, 3, 1).array() == 1.0).all());
  EXPECT_TRUE(diff.block(6, 0, 6, 1).isZero(0));
}

TEST(BiLstm, SingleStepAndZeroParams) {
  Rng rng(2);
  ParamStore store;
  auto p = add_bilstm(store, "l", 2, 3, rng);
  auto xs = random_inputs(1, 2, rng);
  auto tr = bilstm_forward(store, p, xs);
  EXPECT_EQ(tr.fwd.steps.size(), 1u);
  EXPECT_EQ(tr.bwd.steps.size(), 1u);
  for (auto& prm : store) prm.value.setZero();
  for (const auto& h : bilstm_encode(store, p, random_inputs(4, 2, rng))) EXPECT_TRUE(h.isZero(0));
  EXPECT_THROW(bilstm_encode(store, p, {}), std::invalid_argument);
}

TEST(BiLstm, ForwardDirectionIsCausal) {
  Rng rng(4);
  ParamStore store;
  auto p = add_bilstm(store, "l", 3, 4, rng);
  auto xs = random_inputs(5, 3, rng);
  auto base = bilstm_encode(store, p, xs);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    auto ys = xs;
    ys[i + 1] += Vec::Constant(3, 0.5);
    auto pert = bilstm_encode(store, p, ys);
    for (std::size_t j = 0; j <= i; ++j) EXPECT_EQ(Vec(pert[j].head(4)), Vec(base[j].head(4)));
    EXPECT_NE(Vec(pert[i + 1].head(4)), Vec(base[i + 1].head(4)));
    EXPECT_NE(Vec(pert[i].tail(4)), Vec(base[i].tail(4)));
  }
}

TEST(Attention, LongHandTwoStates) {
  ParamStore store;
  AttentionParams p;
  p.size = 2;
  Mat w(2, 2);
  w << 0.5, -0.3, 0.2, 0.8;
  Mat b(2, 1);
  b << 0.1, -0.2;
  Mat u(2, 1);
  u << 1.5, -0.7;
  p.w = store.add("w", w);
  p.b = store.add("b", b);
  p.u = store.add("u", u);
  Vec h1(2), h2(2);
  h1 << 1.0, 2.0;
  h2 << -0.5, 0.25;
  auto r = attention(store, p, {h1, h2});

  const double u10 = std::tanh(0.5 * 1.0 - 0.3 * 2.0 + 0.1), u11 = std::tanh(0.2 * 1.0 + 0.8 * 2.0 - 0.2);
  const double u20 = std::tanh(0.5 * -0.5 - 0.3 * 0.25 + 0.1), u21 = std::tanh(0.2 * -0.5 + 0.8 * 0.25 - 0.2);
  const double e1 = std::exp(1.5 * u10 - 0.7 * u11), e2 = std::exp(1.5 * u20 - 0.7 * u21);
  const double a1 = e1 / (e1 + e2), a2 = e2 / (e1 + e2);
  EXPECT_NEAR(r.alpha[0], a1, 1e-14);
  EXPECT_NEAR(r.alpha[1], a2, 1e-14);
  EXPECT_NEAR(r.s[0], a1 * 1.0 + a2 * -0.5, 1e-14);
  EXPECT_NEAR(r.s[1], a1 * 2.0 + a2 * 0.25, 1e-14);
}

TEST(Attention, SingleAndIdenticalStates) {
  Rng rng(5);
  ParamStore store;
  auto p = add_attention(store, "a", 4, 3, rng);
  Vec h = uniform_matrix(4, 1, 1.0, rng).col(0);
  auto one = attention(store, p, {h});
  EXPECT_EQ(one.alpha[0], 1.0);
  EXPECT_TRUE(one.s.isApprox(h, 1e-15));
  auto same = attention(store, p, std::vector<Vec>(5, h));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(same.alpha[i], 0.2, 1e-12);
  EXPECT_TRUE(same.s.isApprox(h, 1e-12));
}

TEST(Attention, NormalizedAndPermutationCovariant) {
  Rng rng(6);
  ParamStore store;
  auto p = add_attention(store, "a", 4, 3, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 7);
    auto hs = random_inputs(n, 4, rng);
    for (auto& h : hs) h *= 5;
    auto r = attention(store, p, hs);
    EXPECT_NEAR(r.alpha.sum(), 1.0, 1e-12);
    EXPECT_TRUE((r.alpha.array() > 0).all() && (r.alpha.array() <= 1).all());
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    std::vector<Vec> ph;
    for (auto k : perm) ph.push_back(hs[k]);
    auto pr = attention(store, p, ph);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(pr.alpha[static_cast<Eigen::Index>(i)], r.alpha[static_cast<Eigen::Index>(perm[i])], 1e-14);
    }
    EXPECT_TRUE(pr.s.isApprox(r.s, 1e-12));
  }
}

TEST(Attention, StableForLargeScores) {
  ParamStore store;
  Rng rng(7);
  auto p = add_attention(store, "a", 2, 2, rng);
  store[p.u].value *= 1e4;
  auto r = attention(store, p, random_inputs(6, 2, rng));
  EXPECT_TRUE(r.alpha.allFinite());
  EXPECT_NEAR(r.alpha.sum(), 1.0, 1e-12);
}

TEST(OutputVector, Layout) {
  Vec h = Vec::Constant(200, 1.0), s = Vec::Zero(200), f = Vec::Constant(22, 2.0);
  Vec o = output_vector(h, s, f);
  ASSERT_EQ(o.size(), 422);
  EXPECT_TRUE(o.segment(200, 200).isZero(0));
  EXPECT_TRUE((o.tail(22).array() == 2.0).all());
}

TEST(Ffn, ZeroParamsAndScalarCase) {
  Rng rng(8);
  ParamStore store;
  auto p = add_ffn(store, "f", 5, 4, 23, rng);
  EXPECT_EQ(ffn_logits(store, p, Vec::Ones(5)).size(), 23);
  for (auto& prm : store) prm.value.setZero();
  EXPECT_TRUE(ffn_logits(store, p, Vec::Ones(5)).isZero(0));

  ParamStore s1;
  auto q = add_ffn(s1, "g", 1, 1, 1, rng);
  s1[q.w1].value(0, 0) = 0.7;
  s1[q.b1].value(0, 0) = -0.1;
  s1[q.w2].value(0, 0) = 2.0;
  s1[q.b2].value(0, 0) = 0.3;
  Vec x(1);
  x << 0.9;
  EXPECT_NEAR(ffn_logits(s1, q, x)[0], 2.0 * std::tanh(0.7 * 0.9 - 0.1) + 0.3, 1e-15);
}

TEST(Dropout, IdentityCases) {
  Rng rng(9);
  Vec v = uniform_matrix(50, 1, 1.0, rng).col(0);
  EXPECT_EQ(dropout(v, 0.0, rng, true).out, v);
  EXPECT_EQ(dropout(v, 0.5, rng, false).out, v);
  EXPECT_THROW(dropout(v, 1.0, rng, true), std::invalid_argument);
  EXPECT_THROW(dropout(v, -0.1, rng, true), std::invalid_argument);
}

TEST(Dropout, RateAndScaling) {
  Rng rng(10);
  Vec v = Vec::Ones(100000);
  auto r = dropout(v, 0.5, rng, true);
  const double zero_rate = static_cast<double>((r.out.array() == 0).count()) / 1e5;
  EXPECT_NEAR(zero_rate, 0.5, 0.01);
  EXPECT_TRUE(((r.out.array() == 0) || (r.out.array() == 2.0)).all());
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore store;
  Rng rng(11);
  auto h = store.add("x", uniform_matrix(4, 3, 1.0, rng));
  Mat A = uniform_matrix(4, 3, 1.0, rng);
  auto loss = [&](ParamStore& s) {
    const Mat& x = s.value(h);
    s.grad(h) += 2.0 * A.cwiseProduct(x) + A;
    return (A.cwiseProduct(x.cwiseProduct(x)) + A.cwiseProduct(x)).sum();
  };
  auto rep = grad_check(loss, store);
  EXPECT_LT(rep.max_rel_error, 1e-8);
  EXPECT_EQ(rep.coordinates, 12u);
}

TEST(GradCheck, DetectsCorruptedBackward) {
  ParamStore store;
  Rng rng(12);
  auto p = add_bilstm(store, "l", 2, 2, rng);
  auto xs = random_inputs(3, 2, rng);
  Vec c = Vec::LinSpaced(4, -1, 1);
  auto loss = [&](ParamStore& s, bool corrupt) {
    auto tr = bilstm_forward(s, p, xs);
    std::vector<Vec> dh(3, c);
    bilstm_backward(s, p, tr, dh);
    if (corrupt) s.grad(p.fwd.wh)(1, 0) *= 1.5;
    double l = 0;
    for (const auto& h : tr.h) l += c.dot(h);
    return l;
  };
  auto good = grad_check([&](ParamStore& s) { return loss(s, false); }, store);
  auto bad = grad_check([&](ParamStore& s) { return loss(s, true); }, store);
  EXPECT_LT(good.max_rel_error, 1e-4);
  EXPECT_GT(bad.max_rel_error, 1e-2);
  EXPECT_EQ(bad.worst_param, "l.fwd.wh");
}

TEST(GradCheck, NonFiniteLoss) {
  ParamStore store;
  store.add("x", Mat::Ones(1, 1));
  EXPECT_THROW(grad_check([](ParamStore&) { return std::nan(""); }, store), NumericError);
}

TEST(GradCheck, AttentionAndFfnBackward) {
  ParamStore store;
  Rng rng(13);
  auto att = add_attention(store, "a", 4, 3, rng);
  auto ffn = add_ffn(store, "f", 8, 3, 2, rng);
  auto hs = random_inputs(3, 4, rng);
  Vec c = Vec::LinSpaced(2, -1, 1);
  auto loss = [&](ParamStore& s) {
    auto r = attention(s, att, hs);
    double l = 0;
    Vec ds = Vec::Zero(4);
    for (const auto& h : hs) {
      Vec o(8);
      o << h, r.s;
      auto fr = ffn_forward(s, ffn, o);
      l += c.dot(fr.logits);
      Vec dO = ffn_backward(s, ffn, o, fr, c);
      ds += dO.tail(4);
    }
    attention_backward(s, att, hs, r, ds);
    return l;
  };
  auto rep = grad_check(loss, store);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_param;
}

TEST(ParamStore, MaskAndSgd) {
  ParamStore store;
  auto h = store.add("t", Mat::Ones(2, 2));
  store[h].update_mask = Mat::Ones(2, 2);
  store[h].update_mask(0, 1) = 0;
  store.grad(h).setConstant(1.0);
  store.mask_grad();
  EXPECT_EQ(store.grad(h)(0, 1), 0.0);
  store.grad(h).setConstant(1.0);
  store.sgd_step(0.5);
  EXPECT_EQ(store.value(h)(0, 1), 1.0);
  EXPECT_EQ(store.value(h)(1, 1), 0.5);
  EXPECT_THROW(store.add("t", Mat::Ones(1, 1)), std::invalid_argument);
}

TEST(ParamStore, SparseColumns) {
  ParamStore store;
  auto h = store.add("emb", Mat::Ones(2, 4), true);
  store.grad(h).col(2).setConstant(3.0);
  store[h].touch(2);
  EXPECT_NEAR(store.grad_norm(), std::sqrt(18.0), 1e-15);
  store.sgd_step(1.0);
  EXPECT_EQ(store.value(h)(0, 2), -2.0);
  EXPECT_EQ(store.value(h)(0, 1), 1.0);
  store.zero_grad();
  EXPECT_TRUE(store.grad(h).isZero(0));
}
