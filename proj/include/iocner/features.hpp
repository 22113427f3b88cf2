#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "iocner/corpus.hpp"
#include "iocner/error.hpp"
#include "iocner/tld_snapshot.hpp"

namespace iocner {

inline constexpr std::size_t kNumFeatures = 22;
inline constexpr std::size_t kNumIocFeatures = 8;

// Dimension layout of SpellingFeatureVector.
enum FeatureDim : std::size_t {
  kFeatIpv4 = 0,
  kFeatDomain,
  kFeatHash,
  kFeatUrl,
  kFeatVulnerability,
  kFeatFileInfo,
  kFeatEmail,
  kFeatMalware,
  kFeatHasDigit,
  kFeatOnlyDigits,
  kFeatHasAlpha,
  kFeatOnlyAlpha,
  kFeatHasDigitAndAlpha,
  kFeatOnlyDigitsAndAlpha,
  kFeatDotPresent,
  kFeatDotCount,
  kFeatBackslashPresent,
  kFeatBackslashCount,
  kFeatAtPresent,
  kFeatAtCount,
  kFeatColonPresent,
  kFeatColonCount,
};

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "ipv4",         "domain",         "hash",          "url",
    "vulnerability", "file_info",     "email",         "malware",
    "has_digit",    "only_digits",    "has_alpha",     "only_alpha",
    "has_digit_alpha", "only_digit_alpha", "dot",      "dot_count",
    "backslash",    "backslash_count", "at",           "at_count",
    "colon",        "colon_count"};

// Entity code that each IOC feature dimension (0..7) detects.
inline constexpr std::array<const char*, kNumIocFeatures> kIocFeatureEntityCode = {
    "IPv4", "domain", "file-hash", "URL", "vulnerability", "file-info", "email", "malware"};

using SpellingFeatureVector = std::array<double, kNumFeatures>;

// Reads one entry per line; '#' starts a comment, blank lines are skipped.
inline std::vector<std::string> read_list_lines(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

inline std::string to_upper_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

struct FeatureConfig {
  std::set<std::string> tld_set;  // stored upper-case
  std::vector<std::string> malware_prefixes;
  std::string malware_delimiters = ":/.!";

  static std::vector<std::string> default_malware_prefixes() {
    return {"Trojan", "Worm",    "Backdoor", "Virus",    "Ransom",           "Adware",       "Spyware",
            "Rootkit", "Exploit", "HackTool", "PWS",     "TrojanDownloader", "TrojanDropper"};
  }

  // Bundled IANA snapshot plus the default malware prefix list.
  static FeatureConfig bundled() {
    FeatureConfig cfg;
    std::istringstream in(detail::kTldSnapshot);
    cfg.set_tlds(read_list_lines(in));
    cfg.malware_prefixes = default_malware_prefixes();
    return cfg;
  }

  void set_tlds(const std::vector<std::string>& tlds) {
    tld_set.clear();
    for (const auto& t : tlds) tld_set.insert(to_upper_ascii(t));
    if (tld_set.empty()) throw ParseError("TLD list is empty");
  }

  void load_tld_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open TLD list '" + path + "'");
    set_tlds(read_list_lines(in));
  }

  void load_malware_prefix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open malware prefix list '" + path + "'");
    malware_prefixes = read_list_lines(in);
    if (malware_prefixes.empty()) throw ParseError("malware prefix list is empty");
  }

  bool has_tld(std::string_view label) const { return tld_set.count(to_upper_ascii(label)) > 0; }

  bool operator==(const FeatureConfig&) const = default;
};

namespace detail {

inline bool is_domain_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-';
}

// Dot-separated labels of [0-9a-zA-Z-], at least two, last one a known TLD.
inline bool is_domain_name(std::string_view s, const FeatureConfig& cfg) {
  if (s.empty()) return false;
  std::size_t parts = 0, start = 0;
  std::string_view last;
  while (true) {
    auto dot = s.find('.', start);
    auto part = s.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (part.empty() || !std::all_of(part.begin(), part.end(), is_domain_char)) return false;
    ++parts;
    last = part;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts >= 2 && cfg.has_tld(last);
}

// Host part of a token: optional scheme, path, user info and port removed.
inline std::string_view host_part(std::string_view s) {
  if (auto sep = s.find("://"); sep != std::string_view::npos && sep > 0) s.remove_prefix(sep + 3);
  if (auto slash = s.find('/'); slash != std::string_view::npos) s = s.substr(0, slash);
  if (auto at = s.rfind('@'); at != std::string_view::npos) s.remove_prefix(at + 1);
  if (auto colon = s.rfind(':'); colon != std::string_view::npos) {
    auto port = s.substr(colon + 1);
    if (!port.empty() && std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      s = s.substr(0, colon);
    }
  }
  return s;
}

inline const std::regex& ipv4_regex() {
  static const std::regex re(R"(^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})(:\d{1,5})?$)", std::regex::optimize);
  return re;
}
inline const std::regex& url_regex() {
  static const std::regex re(R"(^https?://[0-9a-zA-Z_.\-/]+$)", std::regex::optimize);
  return re;
}
inline const std::regex& cve_regex() {
  static const std::regex re(R"(^CVE-[0-9]{4}-[0-9]{4,6}$)", std::regex::optimize);
  return re;
}
inline const std::regex& file_info_regex() {
  static const std::regex re(R"(^[a-zA-Z]:\\[0-9a-zA-Z_.\-\\]+$)", std::regex::optimize);
  return re;
}
inline const std::regex& email_local_regex() {
  static const std::regex re(R"(^[0-9a-zA-Z_.\-]+$)", std::regex::optimize);
  return re;
}

}  // namespace detail

inline bool ipv4_feature(std::string_view tok) {
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(tok.begin(), tok.end(), m, detail::ipv4_regex())) return false;
  for (int g = 1; g <= 4; ++g) {
    if (std::stoi(m[g].str()) > 255) return false;
  }
  return true;
}

inline bool domain_feature(std::string_view tok, const FeatureConfig& cfg) {
  return detail::is_domain_name(detail::host_part(tok), cfg);
}

inline bool hash_feature(std::string_view tok) {
  if (tok.size() != 32 && tok.size() != 40 && tok.size() != 64) return false;
  return std::all_of(tok.begin(), tok.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

inline bool url_feature(std::string_view tok) {
  return std::regex_match(tok.begin(), tok.end(), detail::url_regex());
}

inline bool vulnerability_feature(std::string_view tok) {
  return std::regex_match(tok.begin(), tok.end(), detail::cve_regex());
}

inline bool file_info_feature(std::string_view tok) {
  return std::regex_match(tok.begin(), tok.end(), detail::file_info_regex());
}

inline bool email_feature(std::string_view tok, const FeatureConfig& cfg) {
  auto at = tok.find('@');
  if (at == std::string_view::npos || at == 0) return false;
  auto local = tok.substr(0, at);
  if (!std::regex_match(local.begin(), local.end(), detail::email_local_regex())) return false;
  return detail::is_domain_name(tok.substr(at + 1), cfg);
}

inline bool malware_feature(std::string_view tok, const FeatureConfig& cfg) {
  for (const auto& prefix : cfg.malware_prefixes) {
    if (tok.size() <= prefix.size()) continue;
    bool same = std::equal(prefix.begin(), prefix.end(), tok.begin(), [](char a, char b) {
      return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    });
    if (same && cfg.malware_delimiters.find(tok[prefix.size()]) != std::string::npos) return true;
  }
  return false;
}

inline SpellingFeatureVector compute_features(std::string_view tok, const FeatureConfig& cfg) {
  SpellingFeatureVector v{};
  auto flag = [](bool b) { return b ? 1.0 : 0.0; };
  v[kFeatIpv4] = flag(ipv4_feature(tok));
  v[kFeatDomain] = flag(domain_feature(tok, cfg));
  v[kFeatHash] = flag(hash_feature(tok));
  v[kFeatUrl] = flag(url_feature(tok));
  v[kFeatVulnerability] = flag(vulnerability_feature(tok));
  v[kFeatFileInfo] = flag(file_info_feature(tok));
  v[kFeatEmail] = flag(email_feature(tok, cfg));
  v[kFeatMalware] = flag(malware_feature(tok, cfg));

  std::size_t digits = 0, alphas = 0;
  double dots = 0, backslashes = 0, ats = 0, colons = 0;
  for (char c : tok) {
    auto uc = static_cast<unsigned char>(c);
    if (std::isdigit(uc)) ++digits;
    else if (uc < 0x80 && std::isalpha(uc)) ++alphas;
    if (c == '.') ++dots;
    if (c == '\\') ++backslashes;
    if (c == '@') ++ats;
    if (c == ':') ++colons;
  }
  const std::size_t n = tok.size();
  v[kFeatHasDigit] = flag(digits > 0);
  v[kFeatOnlyDigits] = flag(n > 0 && digits == n);
  v[kFeatHasAlpha] = flag(alphas > 0);
  v[kFeatOnlyAlpha] = flag(n > 0 && alphas == n);
  v[kFeatHasDigitAndAlpha] = flag(digits > 0 && alphas > 0);
  v[kFeatOnlyDigitsAndAlpha] = flag(n > 0 && digits + alphas == n);
  v[kFeatDotPresent] = flag(dots > 0);
  v[kFeatDotCount] = dots;
  v[kFeatBackslashPresent] = flag(backslashes > 0);
  v[kFeatBackslashCount] = backslashes;
  v[kFeatAtPresent] = flag(ats > 0);
  v[kFeatAtCount] = ats;
  v[kFeatColonPresent] = flag(colons > 0);
  v[kFeatColonCount] = colons;
  return v;
}

inline SpellingFeatureVector compute_features(const Token& tok, const FeatureConfig& cfg) {
  return compute_features(std::string_view(tok.surface), cfg);
}

inline Eigen::VectorXd to_eigen(const SpellingFeatureVector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Trainable affine map over the raw feature vector. Identity initialization
// makes the learned feature channel start out equal to the raw vector.
struct FeatureProjection {
  Eigen::MatrixXd weight = Eigen::MatrixXd::Identity(kNumFeatures, kNumFeatures);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(kNumFeatures);
};

inline Eigen::VectorXd project_features(const Eigen::VectorXd& v, const Eigen::MatrixXd& weight,
                                        const Eigen::VectorXd& bias) {
  return weight * v + bias;
}

inline Eigen::VectorXd project_features(const SpellingFeatureVector& v, const FeatureProjection& proj) {
  return project_features(to_eigen(v), proj.weight, proj.bias);
}

// Accumulates parameter gradients for out = W v + b; returns d(loss)/dv.
inline Eigen::VectorXd project_features_backward(const Eigen::VectorXd& v, const Eigen::MatrixXd& weight,
                                                 const Eigen::VectorXd& d_out, Eigen::Ref<Eigen::MatrixXd> d_weight,
                                                 Eigen::Ref<Eigen::VectorXd> d_bias) {
  d_weight.noalias() += d_out * v.transpose();
  d_bias += d_out;
  return weight.transpose() * d_out;
}

}  // namespace iocner
