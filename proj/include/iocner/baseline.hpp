#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "iocner/corpus.hpp"
#include "iocner/features.hpp"

namespace iocner {

// Rule-based tagger: a token is an IOC when one of the eight pattern
// features fires; attacker / attack method / attack target are recognised
// only from a lexicon of training-set tokens. Every entity is one token long.

using Lexicon = std::map<std::string, int>;  // surface -> entity type

inline constexpr std::array<const char*, 3> kLexiconTypeCodes = {"attacker", "attack-method", "attack-target"};

// Pattern feature dimensions in the order they win when several fire.
inline constexpr std::array<FeatureDim, kNumIocFeatures> kBaselinePrecedence = {
    kFeatVulnerability, kFeatHash, kFeatUrl, kFeatEmail, kFeatFileInfo, kFeatIpv4, kFeatDomain, kFeatMalware};

// Majority type per surface; ties go to the type listed first in the scheme.
inline Lexicon build_lexicon(const std::vector<Sentence>& train, const LabelScheme& scheme) {
  std::vector<int> lexicon_types;
  for (const char* code : kLexiconTypeCodes)
    if (auto t = scheme.type_by_code(code)) lexicon_types.push_back(*t);

  std::map<std::string, std::map<int, std::size_t>> counts;
  for (const auto& s : train) {
    if (!s.gold_labels) continue;
    for (const auto& span : spans_from_bio(*s.gold_labels)) {
      if (std::find(lexicon_types.begin(), lexicon_types.end(), span.entity_type) == lexicon_types.end()) continue;
      for (std::size_t i = span.start; i < span.end; ++i) ++counts[s.tokens[i].surface][span.entity_type];
    }
  }
  Lexicon lex;
  for (const auto& [surface, by_type] : counts) {
    int best = -1;
    std::size_t best_count = 0;
    for (const auto& [type, c] : by_type) {  // ascending type index
      if (c > best_count) {
        best = type;
        best_count = c;
      }
    }
    lex.emplace(surface, best);
  }
  return lex;
}

inline std::vector<int> baseline_tag(const Sentence& sentence, const Lexicon& lexicon, const FeatureConfig& config,
                                     const LabelScheme& scheme = LabelScheme{}) {
  std::array<int, kNumIocFeatures> feature_type{};
  for (std::size_t d = 0; d < kNumIocFeatures; ++d) {
    feature_type[d] = scheme.type_by_code(kIocFeatureEntityCode[d]).value_or(-1);
  }
  std::vector<int> labels(sentence.size(), LabelScheme::outside());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto& tok = sentence.tokens[i];
    const auto f = compute_features(tok, config);
    int type = -1;
    for (FeatureDim d : kBaselinePrecedence) {
      if (f[d] == 1.0 && feature_type[d] >= 0) {
        type = feature_type[d];
        break;
      }
    }
    if (type < 0) {
      if (auto it = lexicon.find(tok.surface); it != lexicon.end()) type = it->second;
    }
    if (type >= 0) labels[i] = LabelScheme::begin_of(type);
  }
  return labels;
}

}  // namespace iocner
