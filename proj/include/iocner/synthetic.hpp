#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "iocner/corpus.hpp"
#include "iocner/netcore.hpp"

namespace iocner {

// Desk-scale stand-in for an annotated APT report corpus. Sentences are
// built from templates around generated IOC strings that satisfy the
// spelling-feature patterns; val/test can hold surface forms never seen in
// training.
struct SyntheticSpec {
  // Relative mention frequency per entity type (default scheme order);
  // defaults follow the training-set entity counts of a real annotated corpus.
  std::array<double, 11> type_counts = {5304, 2737, 3055, 6443, 1284, 10367, 4353, 3012, 7317, 1849, 1557};
  std::size_t train_sentences = 200;
  std::size_t val_sentences = 50;
  std::size_t test_sentences = 50;
  std::size_t filler_vocab = 60;
  std::size_t pool_size = 12;       // distinct training surfaces per entity type
  double unseen_fraction = 0.5;     // val/test mentions with surfaces absent from training
  double list_fraction = 0.4;       // share of sentences that are bare IOC lists
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<Sentence> train, val, test;
};

namespace synth {

enum Type : int {
  kAttacker = 0, kMethod, kTarget, kDomain, kEmail, kHash, kFileInfo, kIpv4, kMalware, kUrl, kVulnerability, kTypes
};

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> w = {
      "the", "and", "report", "analysis", "observed", "also", "campaign", "researchers", "in", "of",
      "this", "that", "was", "were", "has", "been", "activity", "during", "after", "before",
      "our", "team", "identified", "several", "new", "samples", "which", "with", "for", "on",
      "attackers", "later", "first", "stage", "payload", "operation", "likely", "we", "found", "evidence",
      "network", "infrastructure", "between", "months", "recent", "weeks", "data", "systems", "access", "remote",
      "initial", "second", "version", "code", "similar", "tools", "shows", "used", "by", "from"};
  return w;
}

inline const std::vector<std::vector<std::string>>& cues(int type) {
  static const std::array<std::vector<std::vector<std::string>>, kTypes> c = {{
      {{"attributed", "to"}, {"the", "actor"}, {"campaigns", "by"}},
      {{"leveraged"}, {"delivered", "via"}, {"relied", "on"}},
      {{"targeting"}, {"against"}, {"victims", "include"}},
      {{"resolved"}, {"C2", "domain"}, {"beacons", "to"}},
      {{"sent", "from"}, {"registrant"}, {"contact"}},
      {{"MD5"}, {"sample"}, {"hash"}},
      {{"dropped"}, {"writes"}, {"saved", "as"}},
      {{"connects", "to"}, {"server"}, {"IP"}},
      {{"deployed"}, {"the", "implant"}, {"variant", "of"}},
      {{"downloads", "from"}, {"hosted", "at"}, {"requests"}},
      {{"exploiting"}, {"patched"}, {"flaw"}},
  }};
  return c[static_cast<std::size_t>(type)];
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[uniform_index(rng, v.size())];
}

inline std::string pseudo_word(Rng& rng, int min_syl = 2, int max_syl = 3) {
  static const std::string cons = "bcdfghjklmnprstvz";
  static const std::string vow = "aeiou";
  const int syl = min_syl + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(max_syl - min_syl + 1)));
  std::string w;
  for (int i = 0; i < syl; ++i) {
    w += cons[uniform_index(rng, cons.size())];
    w += vow[uniform_index(rng, vow.size())];
  }
  return w;
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline std::string digits(Rng& rng, int lo, int hi) {
  return std::to_string(lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1))));
}

inline std::string domain_name(Rng& rng) {
  static const std::vector<std::string> tlds = {"com", "net", "org", "info", "ru", "cn", "top", "xyz",
                                                "biz", "date", "online", "site", "club", "io", "me"};
  static const std::vector<std::string> subs = {"www", "update", "mail", "cdn", "login", "api"};
  std::string d;
  if (uniform01(rng) < 0.3) d += pick(subs, rng) + ".";
  d += pseudo_word(rng);
  if (uniform01(rng) < 0.3) d += "-" + pseudo_word(rng, 1, 2);
  return d + "." + pick(tlds, rng);
}

inline std::vector<std::string> entity(int type, Rng& rng) {
  static const std::vector<std::string> adjectives = {"Fancy", "Cozy",  "Charming", "Lazy",  "Silent",
                                                      "Dark",  "Golden", "Stone",   "Iron",  "Hidden",
                                                      "Ocean", "Desert", "Winter",  "Shadow", "Crimson"};
  static const std::vector<std::string> animals = {"Bear",  "Panda", "Kitten", "Spider", "Tiger",
                                                   "Lotus", "Falcon", "Wolf",  "Dragon", "Viper",
                                                   "Owl",   "Eagle",  "Lynx",  "Heron"};
  static const std::vector<std::string> method_mods = {"spear", "watering", "credential", "DLL", "supply-chain",
                                                       "drive-by", "password", "brute-force", "SQL", "macro"};
  static const std::vector<std::string> method_nouns = {"phishing", "hole", "dumping", "side-loading",
                                                        "compromise", "download", "spraying", "injection"};
  static const std::vector<std::string> sectors = {"government", "energy", "defense", "financial",
                                                   "telecom", "healthcare", "aerospace", "media",
                                                   "education", "military", "diplomatic", "manufacturing"};
  static const std::vector<std::string> orgs = {"agencies", "companies", "organizations", "institutions",
                                                "ministries", "contractors", "firms", "networks"};
  static const std::vector<std::string> dirs = {"Users", "Public", "Windows", "Temp", "ProgramData",
                                                "AppData", "Roaming", "System32"};
  static const std::vector<std::string> exts = {".exe", ".dll", ".dat", ".tmp", ".bat", ".ps1"};
  static const std::vector<std::string> malware_prefixes = {"Trojan:Win32/", "Backdoor:Win32/", "Worm:Win32/",
                                                            "Ransom:Win32/", "TrojanDropper:Win32/",
                                                            "Backdoor.", "Trojan."};
  static const std::string hex = "0123456789abcdef";
  static const std::string alnum = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

  switch (type) {
    case kAttacker: {
      const double r = uniform01(rng);
      if (r < 0.3) return {"APT" + digits(rng, 1, 99)};
      if (r < 0.7) return {pick(adjectives, rng), pick(animals, rng)};
      return {capitalize(pseudo_word(rng)), uniform01(rng) < 0.5 ? "Group" : "Team"};
    }
    case kMethod:
      return {pick(method_mods, rng), pick(method_nouns, rng)};
    case kTarget:
      return {pick(sectors, rng), pick(orgs, rng)};
    case kDomain:
      return {domain_name(rng)};
    case kEmail:
      return {pseudo_word(rng) + (uniform01(rng) < 0.5 ? digits(rng, 1, 99) : "") + "@" + domain_name(rng)};
    case kHash: {
      static const std::vector<std::size_t> lengths = {32, 40, 64};
      const std::size_t n = pick(lengths, rng);
      std::string h;
      for (std::size_t i = 0; i < n; ++i) h += hex[uniform_index(rng, hex.size())];
      return {h};
    }
    case kFileInfo: {
      std::string p = uniform01(rng) < 0.8 ? "C:" : "D:";
      const std::size_t depth = 1 + uniform_index(rng, 3);
      for (std::size_t i = 0; i < depth; ++i) p += "\\" + pick(dirs, rng);
      return {p + "\\" + pseudo_word(rng) + pick(exts, rng)};
    }
    case kIpv4: {
      std::string ip = digits(rng, 1, 254) + "." + digits(rng, 0, 255) + "." + digits(rng, 0, 255) + "." +
                       digits(rng, 1, 254);
      if (uniform01(rng) < 0.3) ip += ":" + digits(rng, 80, 9999);
      return {ip};
    }
    case kMalware: {
      const std::string name = capitalize(pseudo_word(rng));
      if (uniform01(rng) < 0.6) return {pick(malware_prefixes, rng) + name};
      return {name};
    }
    case kUrl: {
      std::string path;
      const std::size_t len = 3 + uniform_index(rng, 6);
      for (std::size_t i = 0; i < len; ++i) path += alnum[uniform_index(rng, alnum.size())];
      return {(uniform01(rng) < 0.5 ? "http://" : "https://") + domain_name(rng) + "/" + path};
    }
    default:
      return {"CVE-" + digits(rng, 2008, 2019) + "-" + digits(rng, 1000, 99999)};
  }
}

inline std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (const auto& t : toks) out += (out.empty() ? "" : " ") + t;
  return out;
}

struct Skeleton {
  bool is_list = false;
  std::vector<int> types;
};

class Generator {
 public:
  explicit Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
    const auto& base = filler_words();
    for (std::size_t i = 0; i < spec_.filler_vocab; ++i) {
      fillers_.push_back(i < base.size() ? base[i] : pseudo_word(rng_, 3, 4));
    }
    cdf_.resize(kTypes);
    std::partial_sum(spec_.type_counts.begin(), spec_.type_counts.end(), cdf_.begin());
    for (int t = 0; t < kTypes; ++t) {
      std::set<std::string> seen;
      while (pools_[static_cast<std::size_t>(t)].size() < spec_.pool_size) {
        auto e = entity(t, rng_);
        if (seen.insert(join(e)).second) pools_[static_cast<std::size_t>(t)].push_back(e);
      }
    }
  }

  SyntheticCorpus run() {
    SyntheticCorpus out;
    for (std::size_t i = 0; i < spec_.train_sentences; ++i) {
      Skeleton sk = skeleton();
      std::vector<std::vector<std::string>> surfaces;
      for (int t : sk.types) {
        auto s = pick(pools_[static_cast<std::size_t>(t)], rng_);
        train_surfaces_.insert(join(s));
        used_[static_cast<std::size_t>(t)].insert(join(s));
        surfaces.push_back(std::move(s));
      }
      out.train.push_back(render(sk, surfaces));
    }
    for (auto& t : used_) used_lists_.emplace_back(t.begin(), t.end());
    out.val = held_out(spec_.val_sentences);
    out.test = held_out(spec_.test_sentences);
    return out;
  }

 private:
  int sample_type() {
    const double u = uniform01(rng_) * cdf_.back();
    for (int t = 0; t < kTypes; ++t)
      if (u < cdf_[static_cast<std::size_t>(t)]) return t;
    return kTypes - 1;
  }

  Skeleton skeleton() {
    Skeleton sk;
    sk.is_list = uniform01(rng_) < spec_.list_fraction;
    const std::size_t count = sk.is_list ? 2 + uniform_index(rng_, 3) : 1 + uniform_index(rng_, 2);
    for (std::size_t i = 0; i < count; ++i) sk.types.push_back(sample_type());
    return sk;
  }

  void fillers(std::vector<std::string>& toks, std::size_t lo, std::size_t hi) {
    const std::size_t n = lo + uniform_index(rng_, hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i) {
      // Occasional number-like distractors that are not IOCs.
      const double r = uniform01(rng_);
      if (r < 0.04) toks.push_back(digits(rng_, 2008, 2019));
      else if (r < 0.07) toks.push_back(digits(rng_, 1, 9) + "." + digits(rng_, 0, 9) + "." + digits(rng_, 0, 20));
      else toks.push_back(pick(fillers_, rng_));
    }
  }

  Sentence render(const Skeleton& sk, const std::vector<std::vector<std::string>>& surfaces) {
    std::vector<std::string> toks;
    std::vector<EntitySpan> spans;
    auto add_entity = [&](std::size_t k) {
      const std::size_t start = toks.size();
      for (const auto& s : surfaces[k]) toks.push_back(s);
      spans.push_back({start, toks.size(), sk.types[k]});
    };
    if (sk.is_list) {
      static const std::vector<std::vector<std::string>> heads = {
          {"IOCs", ":"}, {"indicators", "include", ":"}, {"observed", "indicators", ":"}, {"see", "also", ":"}};
      for (const auto& h : pick(heads, rng_)) toks.push_back(h);
      for (std::size_t k = 0; k < surfaces.size(); ++k) {
        if (k > 0) toks.push_back(k + 1 == surfaces.size() ? "and" : ",");
        add_entity(k);
      }
    } else {
      fillers(toks, 0, 3);
      for (std::size_t k = 0; k < surfaces.size(); ++k) {
        for (const auto& c : pick(cues(sk.types[k]), rng_)) toks.push_back(c);
        add_entity(k);
        fillers(toks, k + 1 == surfaces.size() ? 0 : 1, 3);
      }
    }
    Sentence s;
    for (auto& t : toks) s.tokens.push_back(make_token(std::move(t)));
    s.gold_labels = bio_from_spans(spans, s.tokens.size(), LabelScheme{});
    return s;
  }

  std::vector<Sentence> held_out(std::size_t n) {
    std::vector<Skeleton> sks;
    std::size_t mentions = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sks.push_back(skeleton());
      mentions += sks.back().types.size();
    }
    const auto fresh_count = static_cast<std::size_t>(std::llround(spec_.unseen_fraction * static_cast<double>(mentions)));
    std::vector<std::size_t> order(mentions);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = mentions; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng_, i)]);
    std::vector<char> fresh(mentions, 0);
    for (std::size_t i = 0; i < fresh_count; ++i) fresh[order[i]] = 1;

    std::vector<Sentence> out;
    std::size_t m = 0;
    for (const auto& sk : sks) {
      std::vector<std::vector<std::string>> surfaces;
      for (int t : sk.types) {
        const auto& reuse = used_lists_[static_cast<std::size_t>(t)];
        if (fresh[m++] || reuse.empty()) {
          std::vector<std::string> e;
          do {
            e = entity(t, rng_);
          } while (train_surfaces_.count(join(e)));
          surfaces.push_back(std::move(e));
        } else {
          surfaces.push_back(split(pick(reuse, rng_)));
        }
      }
      out.push_back(render(sk, surfaces));
    }
    return out;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    for (auto& t : tokenize(s)) out.push_back(t.surface);
    return out;
  }

  SyntheticSpec spec_;
  Rng rng_;
  std::vector<std::string> fillers_;
  std::vector<double> cdf_;
  std::array<std::vector<std::vector<std::string>>, kTypes> pools_;
  std::array<std::set<std::string>, kTypes> used_;
  std::vector<std::vector<std::string>> used_lists_;
  std::set<std::string> train_surfaces_;
};

}  // namespace synth

inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  for (double c : spec.type_counts) {
    if (!(c >= 1)) throw std::invalid_argument("synthetic corpus: every type count must be >= 1");
  }
  if (spec.train_sentences == 0 || spec.pool_size == 0 || spec.filler_vocab == 0) {
    throw std::invalid_argument("synthetic corpus: sizes must be >= 1");
  }
  if (spec.unseen_fraction < 0 || spec.unseen_fraction > 1) {
    throw std::invalid_argument("synthetic corpus: unseen fraction must be in [0, 1]");
  }
  return synth::Generator(spec).run();
}

// Surfaces of every gold entity span, joined with single spaces.
inline std::set<std::string> entity_surfaces(const std::vector<Sentence>& corpus) {
  std::set<std::string> out;
  for (const auto& s : corpus) {
    if (!s.gold_labels) continue;
    for (const auto& span : spans_from_bio(*s.gold_labels)) out.insert(span_surface(s, span));
  }
  return out;
}

}  // namespace iocner
