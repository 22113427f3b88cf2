#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "iocner/features.hpp"

using namespace iocner;

namespace {

const FeatureConfig& cfg() {
  static const FeatureConfig c = FeatureConfig::bundled();
  return c;
}

SpellingFeatureVector F(const std::string& s) { return compute_features(s, cfg()); }

}  // namespace

TEST(Features, Hash) {
  EXPECT_EQ(F("d41d8cd98f00b204e9800998ecf8427e")[kFeatHash], 1.0);
  EXPECT_EQ(F("da39a3ee5e6b4b0d3255bfef95601890afd80709")[kFeatHash], 1.0);
  EXPECT_EQ(F("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")[kFeatHash], 1.0);
  EXPECT_EQ(F("D41D8CD98F00B204E9800998ECF8427E")[kFeatHash], 1.0);
  EXPECT_EQ(F("d41d8cd98f00b204e9800998ecf8427")[kFeatHash], 0.0);
  EXPECT_EQ(F("g41d8cd98f00b204e9800998ecf8427e")[kFeatHash], 0.0);
  EXPECT_EQ(F("CVE-2017-0144")[kFeatHash], 0.0);
}

TEST(Features, Vulnerability) {
  EXPECT_EQ(F("CVE-2017-0144")[kFeatVulnerability], 1.0);
  EXPECT_EQ(F("CVE-2021-123456")[kFeatVulnerability], 1.0);
  EXPECT_EQ(F("CVE-2017-014")[kFeatVulnerability], 0.0);
  EXPECT_EQ(F("cve-2017-0144")[kFeatVulnerability], 0.0);
  EXPECT_EQ(F("CVE-2017-0144x")[kFeatVulnerability], 0.0);
}

TEST(Features, Url) {
  const auto v = F("http://www7.chrome-up.date/0m5EE");
  EXPECT_EQ(v[kFeatUrl], 1.0);
  EXPECT_EQ(v[kFeatDomain], 1.0);
  EXPECT_EQ(F("https://a.b.com/x_y-z")[kFeatUrl], 1.0);
  EXPECT_EQ(F("ftp://a.com/x")[kFeatUrl], 0.0);
  EXPECT_EQ(F("http://a.com/?q=1")[kFeatUrl], 0.0);
  EXPECT_EQ(F("www.a.com")[kFeatUrl], 0.0);
}

TEST(Features, FileInfo) {
  EXPECT_EQ(F("MDDEFGEGETGIZ")[kFeatFileInfo], 0.0);
  EXPECT_EQ(F("C:\\Windows\\System32\\evil.dll")[kFeatFileInfo], 1.0);
  EXPECT_EQ(F("c:\\a")[kFeatFileInfo], 1.0);
  EXPECT_EQ(F("C:/Windows/evil.dll")[kFeatFileInfo], 0.0);
  EXPECT_EQ(F("C:\\Program Files")[kFeatFileInfo], 0.0);
}

TEST(Features, Ipv4) {
  const auto v = F("192.168.1.1:8080");
  EXPECT_EQ(v[kFeatIpv4], 1.0);
  EXPECT_EQ(v[kFeatDotCount], 3.0);
  EXPECT_EQ(v[kFeatColonCount], 1.0);
  EXPECT_EQ(v[kFeatDotPresent], 1.0);
  EXPECT_EQ(v[kFeatColonPresent], 1.0);
  EXPECT_EQ(F("10.0.0.255")[kFeatIpv4], 1.0);
  EXPECT_EQ(F("10.0.0.256")[kFeatIpv4], 0.0);
  EXPECT_EQ(F("10.0.0")[kFeatIpv4], 0.0);
  EXPECT_EQ(F("1.2.3.4:123456")[kFeatIpv4], 0.0);
  EXPECT_EQ(F("1.2.3.4.5")[kFeatIpv4], 0.0);
}

TEST(Features, Domain) {
  EXPECT_EQ(F("evil.com")[kFeatDomain], 1.0);
  EXPECT_EQ(F("mail.evil-site.RU")[kFeatDomain], 1.0);
  EXPECT_EQ(F("evil.notatld")[kFeatDomain], 0.0);
  EXPECT_EQ(F("evil..com")[kFeatDomain], 0.0);
  EXPECT_EQ(F("com")[kFeatDomain], 0.0);
  EXPECT_EQ(F("ev_il.com")[kFeatDomain], 0.0);
  EXPECT_EQ(F("1.2.3")[kFeatDomain], 0.0);
}

TEST(Features, Email) {
  EXPECT_EQ(F("john.doe@evil.com")[kFeatEmail], 1.0);
  EXPECT_EQ(F("a_b-c@mail.evil.org")[kFeatEmail], 1.0);
  EXPECT_EQ(F("@evil.com")[kFeatEmail], 0.0);
  EXPECT_EQ(F("a@evil.nosuchtld")[kFeatEmail], 0.0);
  EXPECT_EQ(F("a+b@evil.com")[kFeatEmail], 0.0);
  EXPECT_EQ(F("a@b@evil.com")[kFeatEmail], 0.0);
}

TEST(Features, Malware) {
  EXPECT_EQ(F("Trojan:Win32/Emotet")[kFeatMalware], 1.0);
  EXPECT_EQ(F("backdoor.agent")[kFeatMalware], 1.0);
  EXPECT_EQ(F("Ransom!abc")[kFeatMalware], 1.0);
  EXPECT_EQ(F("TrojanDownloader:Win32/x")[kFeatMalware], 1.0);
  EXPECT_EQ(F("Trojan")[kFeatMalware], 0.0);
  EXPECT_EQ(F("Trojans")[kFeatMalware], 0.0);
  EXPECT_EQ(F("Emotet")[kFeatMalware], 0.0);
}

TEST(Features, CharacterClasses) {
  auto v = F("2017");
  EXPECT_EQ(v[kFeatHasDigit], 1.0);
  EXPECT_EQ(v[kFeatOnlyDigits], 1.0);
  EXPECT_EQ(v[kFeatHasAlpha], 0.0);
  EXPECT_EQ(v[kFeatOnlyDigitsAndAlpha], 1.0);
  v = F("APT");
  EXPECT_EQ(v[kFeatOnlyAlpha], 1.0);
  EXPECT_EQ(v[kFeatHasDigitAndAlpha], 0.0);
  v = F("APT28");
  EXPECT_EQ(v[kFeatHasDigitAndAlpha], 1.0);
  EXPECT_EQ(v[kFeatOnlyDigitsAndAlpha], 1.0);
  EXPECT_EQ(v[kFeatOnlyAlpha], 0.0);
  v = F("APT-28");
  EXPECT_EQ(v[kFeatOnlyDigitsAndAlpha], 0.0);
  v = F("a\\b\\c@d");
  EXPECT_EQ(v[kFeatBackslashCount], 2.0);
  EXPECT_EQ(v[kFeatAtCount], 1.0);
}

TEST(Features, InvariantsOnRandomTokens) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "aZ09.:\\@/-_x7fFC";
  for (int trial = 0; trial < 5000; ++trial) {
    std::string tok;
    const std::size_t len = 1 + rng() % 20;
    for (std::size_t i = 0; i < len; ++i) tok += alphabet[rng() % alphabet.size()];
    const auto v = F(tok);
    for (std::size_t d = 0; d < kFeatDotPresent; ++d) EXPECT_TRUE(v[d] == 0.0 || v[d] == 1.0);
    for (std::size_t d = kFeatDotPresent; d < kNumFeatures; d += 2) {
      EXPECT_GE(v[d + 1], 0.0);
      EXPECT_EQ(v[d + 1], std::floor(v[d + 1]));
      EXPECT_EQ(v[d] == 1.0, v[d + 1] > 0);
    }
    EXPECT_FALSE(v[kFeatOnlyDigits] == 1.0 && v[kFeatOnlyAlpha] == 1.0);
    if (v[kFeatOnlyDigits] == 1.0) EXPECT_EQ(v[kFeatHasDigit], 1.0);
    EXPECT_EQ(v[kFeatHasDigitAndAlpha], v[kFeatHasDigit] * v[kFeatHasAlpha]);
    EXPECT_EQ(v, F(tok));
  }
}

TEST(Features, TldFileOverride) {
  const std::string path = ::testing::TempDir() + "tlds.txt";
  {
    std::ofstream out(path);
    out << "# comment\nZZTEST\n";
  }
  FeatureConfig c = FeatureConfig::bundled();
  c.load_tld_file(path);
  EXPECT_EQ(compute_features("a.zztest", c)[kFeatDomain], 1.0);
  EXPECT_EQ(compute_features("a.com", c)[kFeatDomain], 0.0);
  std::remove(path.c_str());
  EXPECT_THROW(c.load_tld_file("/nonexistent/tlds"), IoError);
}

TEST(Projection, IdentityAndBias) {
  const auto v = F("http://www7.chrome-up.date/0m5EE");
  FeatureProjection p;
  EXPECT_EQ(project_features(v, p), to_eigen(v));
  p.weight.setZero();
  p.bias = Eigen::VectorXd::LinSpaced(kNumFeatures, -1, 1);
  EXPECT_EQ(project_features(v, p), p.bias);
}

TEST(Projection, MatchesLongHand) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  FeatureProjection p;
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = u(rng);
  SpellingFeatureVector v;
  for (auto& x : v) x = u(rng);
  const auto out = project_features(v, p);
  for (std::size_t r = 0; r < kNumFeatures; ++r) {
    double acc = p.bias[static_cast<Eigen::Index>(r)];
    for (std::size_t c = 0; c < kNumFeatures; ++c) acc += p.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * v[c];
    EXPECT_NEAR(out[static_cast<Eigen::Index>(r)], acc, 1e-12);
  }
}

TEST(Projection, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd W(kNumFeatures, kNumFeatures);
  Eigen::VectorXd b(kNumFeatures), v(kNumFeatures), c(kNumFeatures);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    b[i] = u(rng);
    v[i] = u(rng);
    c[i] = u(rng);
  }
  // loss = sum(c .* tanh(W v + b))
  auto loss = [&](const Eigen::MatrixXd& w, const Eigen::VectorXd& bb, const Eigen::VectorXd& vv) {
    return c.dot(project_features(vv, w, bb).array().tanh().matrix());
  };
  Eigen::VectorXd out = project_features(v, W, b);
  Eigen::VectorXd d_out = c.cwiseProduct((1.0 - out.array().tanh().square()).matrix());
  Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(kNumFeatures, kNumFeatures);
  Eigen::VectorXd db = Eigen::VectorXd::Zero(kNumFeatures);
  Eigen::VectorXd dv = project_features_backward(v, W, d_out, dW, db);

  const double eps = 1e-5;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4}); };
  double worst = 0;
  for (Eigen::Index i = 0; i < W.size(); ++i) {
    Eigen::MatrixXd wp = W, wm = W;
    wp.data()[i] += eps;
    wm.data()[i] -= eps;
    worst = std::max(worst, rel(dW.data()[i], (loss(wp, b, v) - loss(wm, b, v)) / (2 * eps)));
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Eigen::VectorXd bp = b, bm = b, vp = v, vm = v;
    bp[i] += eps;
    bm[i] -= eps;
    vp[i] += eps;
    vm[i] -= eps;
    worst = std::max(worst, rel(db[i], (loss(W, bp, v) - loss(W, bm, v)) / (2 * eps)));
    worst = std::max(worst, rel(dv[i], (loss(W, b, vp) - loss(W, b, vm)) / (2 * eps)));
  }
  EXPECT_LT(worst, 1e-6);
}
