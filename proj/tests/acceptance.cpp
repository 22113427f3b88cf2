#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "iocner/iocner.hpp"

using namespace iocner;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kLogZTol = 1e-8;
constexpr double kViterbiTol = 1e-10;
constexpr double kCrfSeconds = 10;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60;
constexpr double kAlphaTol = 1e-12;
constexpr double kOverfitF1 = 0.99;
constexpr int kOverfitEpochs = 150;
constexpr double kOverfitSeconds = 300;
constexpr double kRecallGap = 0.05;
constexpr int kBioDecodes = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome crf_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst_z = 0, worst_v = 0;
  for (auto [n, L] : {std::pair{3, 4}, {4, 5}, {5, 6}}) {
    for (int trial = 0; trial < 100; ++trial) {
      Mat E = uniform_matrix(n, L, 3.0, rng);
      Mat T = uniform_matrix(L + 2, L + 2, 3.0, rng);
      std::vector<int> y(static_cast<std::size_t>(n), 0);
      double best = -std::numeric_limits<double>::infinity();
      std::vector<double> scores;
      while (true) {
        const double s = sequence_score(E, y, T);
        scores.push_back(s);
        best = std::max(best, s);
        int k = n - 1;
        while (k >= 0 && ++y[static_cast<std::size_t>(k)] == L) y[static_cast<std::size_t>(k--)] = 0;
        if (k < 0) break;
      }
      double acc = 0;
      for (double s : scores) acc += std::exp(s - best);
      const double brute = best + std::log(acc);
      worst_z = std::max(worst_z, std::abs(log_partition(E, T) - brute));
      worst_v = std::max(worst_v, std::abs(viterbi_decode(E, T).score - best));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_z <= kLogZTol && worst_v <= kViterbiTol && secs < kCrfSeconds,
          "max |logZ err| " + sci(worst_z) + ", max |viterbi err| " + sci(worst_v) + ", " + num(secs, 2) + " s"};
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  LabelScheme scheme({{"alpha", "a"}, {"beta", "b"}});
  ModelDims d;
  d.token_dim = 3;
  d.char_dim = 2;
  d.char_hidden = 2;
  d.word_hidden = 3;
  d.attention = 2;
  d.ffn_hidden = 3;
  Sentence s;
  for (const char* w : {"via", "10.1.2.3", "evil.com", "x"}) s.tokens.push_back(make_token(w));
  s.gold_labels = std::vector<int>{0, 1, 3, 4};
  Tagger m(scheme, d, vocab_from_sentences({s}), CharVocab::from_sentences({s}), FeatureConfig::bundled(), 11);
  auto ps = m.prepare(s);
  auto rep = grad_check([&](ParamStore&) { return m.loss_and_grad(ps); }, m.params());
  const double secs = seconds_since(t0);
  return {rep.max_rel_error < kGradTol && secs < kGradSeconds,
          "max rel error " + sci(rep.max_rel_error) + " at " + rep.worst_param + ", " + num(secs, 2) + " s"};
}

Outcome attention_properties() {
  Rng rng(7);
  double worst_sum = 0, worst_uniform = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = 1 + static_cast<int>(uniform_index(rng, 8));
    const int size = 1 + static_cast<int>(uniform_index(rng, 8));
    const std::size_t n = 1 + uniform_index(rng, 20);
    ParamStore store;
    auto p = add_attention(store, "a", dim, size, rng);
    for (auto& prm : store) prm.value *= 1 + 4 * uniform01(rng);
    std::vector<Vec> hs;
    for (std::size_t i = 0; i < n; ++i) hs.push_back(uniform_matrix(dim, 1, 5.0, rng).col(0));
    worst_sum = std::max(worst_sum, std::abs(attention(store, p, hs).alpha.sum() - 1.0));
    auto same = attention(store, p, std::vector<Vec>(n, hs[0]));
    for (Eigen::Index i = 0; i < same.alpha.size(); ++i) {
      worst_uniform = std::max(worst_uniform, std::abs(same.alpha[i] - 1.0 / static_cast<double>(n)));
    }
  }
  return {worst_sum <= kAlphaTol && worst_uniform <= kAlphaTol,
          "max |sum - 1| " + sci(worst_sum) + ", max |alpha - 1/n| " + sci(worst_uniform)};
}

Outcome feature_suite() {
  const auto cfg = FeatureConfig::bundled();
  struct Case {
    const char* token;
    FeatureDim dim;
    double expected;
  };
  const Case cases[] = {
      {"192.168.1.1", kFeatIpv4, 1},
      {"10.0.0.255:443", kFeatIpv4, 1},
      {"10.0.0.256", kFeatIpv4, 0},
      {"1.2.3", kFeatIpv4, 0},
      {"evil.com", kFeatDomain, 1},
      {"mail.evil-site.ru", kFeatDomain, 1},
      {"evil.notatld", kFeatDomain, 0},
      {"evil..com", kFeatDomain, 0},
      {"d41d8cd98f00b204e9800998ecf8427e", kFeatHash, 1},
      {"da39a3ee5e6b4b0d3255bfef95601890afd80709", kFeatHash, 1},
      {"e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855", kFeatHash, 1},
      {"d41d8cd98f00b204e9800998ecf8427", kFeatHash, 0},
      {"http://www7.chrome-up.date/0m5EE", kFeatUrl, 1},
      {"https://a.b.com/x_y-z", kFeatUrl, 1},
      {"www.a.com", kFeatUrl, 0},
      {"CVE-2017-0144", kFeatVulnerability, 1},
      {"CVE-2017-014", kFeatVulnerability, 0},
      {"C:\\Windows\\System32\\evil.dll", kFeatFileInfo, 1},
      {"MDDEFGEGETGIZ", kFeatFileInfo, 0},
      {"C:/Windows/evil.dll", kFeatFileInfo, 0},
      {"john.doe@evil.com", kFeatEmail, 1},
      {"a@evil.nosuchtld", kFeatEmail, 0},
      {"@evil.com", kFeatEmail, 0},
      {"Trojan:Win32/Emotet", kFeatMalware, 1},
      {"Backdoor.Agent", kFeatMalware, 1},
      {"Trojan", kFeatMalware, 0},
      {"Emotet", kFeatMalware, 0},
      {"2017", kFeatOnlyDigits, 1},
      {"APT28", kFeatHasDigitAndAlpha, 1},
      {"APT28", kFeatOnlyDigitsAndAlpha, 1},
      {"APT-28", kFeatOnlyDigitsAndAlpha, 0},
      {"APT", kFeatOnlyAlpha, 1},
      {"APT", kFeatHasDigit, 0},
      {"a.b.c", kFeatDotCount, 2},
      {"a\\b\\c", kFeatBackslashCount, 2},
      {"a@b", kFeatAtPresent, 1},
      {"1.2.3.4:80", kFeatColonCount, 1},
  };
  std::size_t failed = 0;
  std::string first;
  for (const auto& c : cases) {
    if (compute_features(c.token, cfg)[c.dim] != c.expected) {
      if (!failed) first = std::string(c.token) + " / " + kFeatureNames[c.dim];
      ++failed;
    }
  }
  const std::size_t total = sizeof cases / sizeof cases[0];
  return {failed == 0, std::to_string(total - failed) + "/" + std::to_string(total) + " cases" +
                           (failed ? ", first failure: " + first : "")};
}

Outcome overfit_capacity() {
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.train_sentences = 30;
  spec.val_sentences = 0;
  spec.test_sentences = 0;
  auto c = make_synthetic_corpus(spec);
  TrainConfig cfg;
  cfg.dropout = 0.0;
  cfg.max_epochs = kOverfitEpochs;
  cfg.patience = kOverfitEpochs;
  int reached = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    if (!reached && r.val_f1 >= kOverfitF1) reached = r.epoch;
  };
  auto r = train(c.train, c.train, cfg, nullptr, FeatureConfig::bundled(), LabelScheme{}, hooks);
  const double f1 = entity_prf(c.train, tag_all(r.model, c.train), LabelScheme{}).micro.f1;
  const double secs = seconds_since(t0);
  return {reached > 0 && f1 >= kOverfitF1 && secs < kOverfitSeconds,
          "train F1 " + num(f1) + ", first reached at epoch " + std::to_string(reached) + ", " +
              std::to_string(r.history.epochs.size()) + " epochs, " + num(secs, 1) + " s"};
}

// Generalisation experiments share one setup: synthetic corpora with half of
// the held-out mentions unseen, all network sizes 25, default training recipe.
TrainConfig small_config(std::uint64_t seed, bool features) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.dims.token_dim = 25;
  cfg.dims.char_dim = 25;
  cfg.dims.char_hidden = 25;
  cfg.dims.word_hidden = 25;
  cfg.dims.attention = 25;
  cfg.dims.ffn_hidden = 25;
  cfg.dims.use_features = features;
  return cfg;
}

struct RunScore {
  double f1 = 0, recall = 0;
};

struct Setting {
  std::uint64_t seed;
  double fraction;
  RunScore full, plain, baseline;
};

std::vector<Setting> g_runs;

const Setting& run_setting(std::uint64_t seed, double fraction) {
  for (const auto& s : g_runs)
    if (s.seed == seed && s.fraction == fraction) return s;
  SyntheticSpec spec;
  spec.seed = seed;
  spec.train_sentences = 200;
  spec.unseen_fraction = 0.5;
  auto c = make_synthetic_corpus(spec);
  c.train.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(c.train.size()))));
  Setting out{seed, fraction, {}, {}, {}};
  for (bool features : {true, false}) {
    auto r = train(c.train, c.val, small_config(seed, features));
    auto rep = entity_prf(c.test, tag_all(r.model, c.test), LabelScheme{});
    (features ? out.full : out.plain) = {rep.micro.f1, rep.micro.recall};
  }
  const auto lex = build_lexicon(c.train, LabelScheme{});
  std::vector<std::vector<int>> bp;
  for (const auto& s : c.test) bp.push_back(baseline_tag(s, lex, FeatureConfig::bundled()));
  auto br = entity_prf(c.test, bp, LabelScheme{});
  out.baseline = {br.micro.f1, br.micro.recall};
  std::fprintf(stderr, "  [seed %llu, %3.0f%% train] full F1 %.4f R %.4f | no-features F1 %.4f R %.4f | baseline F1 %.4f\n",
               static_cast<unsigned long long>(seed), 100 * fraction, out.full.f1, out.full.recall, out.plain.f1,
               out.plain.recall, out.baseline.f1);
  g_runs.push_back(out);
  return g_runs.back();
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

Outcome ablation_direction() {
  double full = 0, plain = 0;
  for (auto seed : kSeeds) {
    const auto& s = run_setting(seed, 1.0);
    full += s.full.recall / 3;
    plain += s.plain.recall / 3;
  }
  return {full - plain >= kRecallGap,
          "mean recall full " + num(full) + " vs no-features " + num(plain) + ", gap " + num(100 * (full - plain), 1) +
              " points"};
}

Outcome baseline_gap() {
  double model = 0, base = 0;
  for (auto seed : kSeeds) {
    const auto& s = run_setting(seed, 1.0);
    model += s.full.f1 / 3;
    base += s.baseline.f1 / 3;
  }
  return {model > base, "mean F1 trained " + num(model) + " vs baseline " + num(base)};
}

Outcome size_trend() {
  double small_gap = 0, full_gap = 0;
  for (auto seed : kSeeds) {
    const auto& a = run_setting(seed, 0.25);
    small_gap += (a.full.f1 - a.plain.f1) / 3;
    const auto& b = run_setting(seed, 1.0);
    full_gap += (b.full.f1 - b.plain.f1) / 3;
  }
  return {small_gap >= full_gap,
          "mean F1 advantage at 25% " + num(small_gap) + " vs at 100% " + num(full_gap)};
}

Outcome determinism_and_persistence() {
  SyntheticSpec spec;
  spec.train_sentences = 30;
  spec.val_sentences = 10;
  spec.test_sentences = 10;
  auto c = make_synthetic_corpus(spec);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = 4;
  cfg.patience = 4;
  cfg.dims.token_dim = cfg.dims.word_hidden = cfg.dims.attention = cfg.dims.ffn_hidden = 12;
  cfg.dims.char_dim = cfg.dims.char_hidden = 6;
  auto a = train(c.train, c.val, cfg);
  auto b = train(c.train, c.val, cfg);
  bool same_history = a.history.epochs.size() == b.history.epochs.size();
  for (std::size_t i = 0; same_history && i < a.history.epochs.size(); ++i) {
    same_history = a.history.epochs[i].train_loss == b.history.epochs[i].train_loss &&
                   a.history.epochs[i].val_f1 == b.history.epochs[i].val_f1;
  }
  const auto path = (std::filesystem::temp_directory_path() / "iocner_acceptance_model.bin").string();
  save_model(a.model, cfg, path);
  auto loaded = load_model(path);
  std::filesystem::remove(path);
  bool same_output = tag_all(a.model, c.test) == tag_all(loaded.model, c.test);
  for (const auto& s : c.test) {
    same_output = same_output && a.model.emissions(a.model.prepare(s)) == loaded.model.emissions(loaded.model.prepare(s));
  }
  return {same_history && same_output, std::string("loss history ") + (same_history ? "identical" : "differs") +
                                           ", reloaded tagging " + (same_output ? "identical" : "differs")};
}

Outcome bio_validity() {
  SyntheticSpec spec;
  spec.train_sentences = 100;
  auto c = make_synthetic_corpus(spec);
  ModelDims d;
  d.token_dim = d.word_hidden = d.attention = d.ffn_hidden = 6;
  d.char_dim = d.char_hidden = 3;
  const auto vocab = vocab_from_sentences(c.train);
  const auto chars = CharVocab::from_sentences(c.train);
  Rng rng(99);
  int decodes = 0, invalid = 0;
  for (std::uint64_t seed = 0; decodes < kBioDecodes; ++seed) {
    Tagger m(LabelScheme{}, d, vocab, chars, FeatureConfig::bundled(), seed);
    // Re-draw every parameter over a wider range; masked transitions stay masked.
    for (auto& p : m.params()) {
      p.value = uniform_matrix(p.value.rows(), p.value.cols(), 3.0, rng);
      if (p.name == "crf.transitions") apply_transition_mask(p.value, m.transition_mask());
    }
    for (int k = 0; k < 100 && decodes < kBioDecodes; ++k, ++decodes) {
      const auto& s = c.train[uniform_index(rng, c.train.size())];
      if (!is_bio_valid(m.tag(s))) ++invalid;
    }
  }
  return {invalid == 0, std::to_string(decodes - invalid) + "/" + std::to_string(decodes) + " decodes BIO-valid"};
}

Outcome skipgram_sanity() {
  // Two vocabularies that never share a sentence.
  const std::vector<std::string> A = {"apt", "actor", "group", "crew", "team", "gang"};
  const std::vector<std::string> B = {"dll", "exe", "payload", "dropper", "loader", "binary"};
  double within_total = 0, across_total = 0;
  int seeds_ok = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<std::vector<std::string>> texts;
    for (int i = 0; i < 600; ++i) {
      const auto& cluster = i % 2 ? A : B;
      std::vector<std::string> sent;
      for (int k = 0; k < 6; ++k) sent.push_back(cluster[uniform_index(rng, cluster.size())]);
      texts.push_back(sent);
    }
    SkipGramConfig cfg;
    cfg.seed = seed;
    auto e = pretrain_skipgram(texts, cfg);
    auto vec = [&](const std::string& w) { return embed_token(w, e.vocab, e.table); };
    double within = 0, across = 0;
    int nw = 0, na = 0;
    for (const auto* cl : {&A, &B}) {
      for (std::size_t i = 0; i < cl->size(); ++i)
        for (std::size_t j = i + 1; j < cl->size(); ++j, ++nw) within += cosine(vec((*cl)[i]), vec((*cl)[j]));
    }
    for (const auto& a : A)
      for (const auto& b : B) {
        across += cosine(vec(a), vec(b));
        ++na;
      }
    within /= nw;
    across /= na;
    seeds_ok += within > across;
    within_total += within / 10;
    across_total += across / 10;
  }
  return {within_total > across_total, "mean cosine co-occurring " + num(within_total) + " vs never co-occurring " +
                                           num(across_total) + " (" + std::to_string(seeds_ok) + "/10 seeds)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"CRF oracle equivalence", crf_oracle},
      {"gradient integrity", gradient_integrity},
      {"attention properties", attention_properties},
      {"spelling feature suite", feature_suite},
      {"overfitting capacity", overfit_capacity},
      {"ablation direction (recall)", ablation_direction},
      {"baseline gap (F1)", baseline_gap},
      {"training-size trend", size_trend},
      {"determinism and persistence", determinism_and_persistence},
      {"BIO validity", bio_validity},
      {"skip-gram sanity", skipgram_sanity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %2zu  %-30s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
  return failures ? 1 : 0;
}
