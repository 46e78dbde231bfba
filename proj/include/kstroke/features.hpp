/*
 * Copyright 2026 The kstroke Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Window featurization: per-key dwell (KHT) and per-digraph interval (KIT)
// means over a vocabulary learned from training windows, followed by twelve
// linguistic and editing markers computed from the reconstructed text.

#ifndef KSTROKE_FEATURES_HPP_
#define KSTROKE_FEATURES_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kstroke/logmodel.hpp"
#include "kstroke/segmenter.hpp"

namespace kstroke {

enum class KitVariant { PressPress, ReleasePress };

std::string_view to_string(KitVariant v);
KitVariant parse_kit_variant(std::string_view text);

using Digraph = std::pair<int, int>;

struct TimingObs {
  std::map<int, std::vector<double>> kht;
  std::map<Digraph, std::vector<double>> kit;
};

// A matched Down/Up pair.
struct Keystroke {
  int keycode;
  double down;
  double up;
};

// Pairs each Up with the oldest outstanding Down of the same key; result is
// ordered by Down time. Unpaired events are ignored.
std::vector<Keystroke> match_keystrokes(std::span<const KeyEvent> events);

TimingObs extract_timing(std::span<const KeyEvent> events, KitVariant variant);
inline TimingObs extract_timing(const Window& w, KitVariant variant) {
  return extract_timing(w.events, variant);
}

struct VocabItem {
  int first = 0;
  int second = -1;  // -1 for a unigram
  std::size_t count = 0;

  bool is_digraph() const { return second >= 0; }
  friend bool operator==(const VocabItem&, const VocabItem&) = default;
};

enum class VocabBudget { Combined, PerKind };

struct FeatureVocabulary {
  std::vector<VocabItem> items;  // ranked; timing slots follow this order
  std::string fingerprint;

  std::vector<int> unigrams() const;
  std::vector<Digraph> digraphs() const;
  std::size_t size() const { return items.size(); }

  friend bool operator==(const FeatureVocabulary&, const FeatureVocabulary&) = default;
};

// Ranks keys and key pairs by occurrence count over the training windows
// (ties: unigrams first, then ascending codes) and keeps the top `budget`,
// either combined or per kind. Throws ConfigError on an empty corpus.
FeatureVocabulary build_vocabulary(std::span<const Window> training_windows,
                                   std::size_t budget = 100,
                                   VocabBudget mode = VocabBudget::Combined);

// Plain word lists, one lower-case token per line.
struct LexiconSet {
  std::unordered_set<std::string> dictionary;
  std::unordered_set<std::string> modals;
  std::unordered_set<std::string> function_words;
  std::unordered_set<std::string> nouns;
  std::unordered_set<std::string> verbs;
  std::unordered_set<std::string> adjectives;
  std::unordered_set<std::string> adverbs;

  // Requires dictionary.txt and modals.txt; the other lists are optional.
  static LexiconSet load(const std::filesystem::path& dir);
  // $KSTROKE_LEXICON_DIR if set, else the bundled data/lexicon directory.
  static std::filesystem::path default_dir();
  static LexiconSet load_default() { return load(default_dir()); }
};

enum class WordClass { Noun, Verb, Adjective, Adverb, Modal, Function, Other };

WordClass classify_word(std::string_view lower_word, const LexiconSet& lex);

inline constexpr std::size_t kLinguisticCount = 12;

struct LinguisticFeatures {
  double word_count = 0;
  double backspaces_per_sentence = 0;
  double avg_word_length = 0;
  double nouns_per_sentence = 0;
  double verbs_per_sentence = 0;
  double modifiers_per_sentence = 0;
  double modals_per_sentence = 0;
  double named_entities_per_sentence = 0;
  double lexical_density = 0;
  double spelling_mistakes = 0;
  double special_chars_per_sentence = 0;
  double keystrokes_per_burst = 0;

  std::array<double, kLinguisticCount> to_array() const;
  static const std::array<std::string_view, kLinguisticCount>& names();
};

LinguisticFeatures extract_linguistic(std::span<const KeyEvent> events, const LexiconSet& lex,
                                      double pause_threshold_ms = 2000.0);

struct FeatureConfig {
  KitVariant kit = KitVariant::PressPress;
  double pause_threshold_ms = 2000.0;
  std::size_t min_observations = 1;  // fewer observations -> missing
};

inline constexpr double kMissing = -1.0;

struct FeatureVector {
  std::vector<double> values;  // |vocab| timing slots, then 12 linguistic
  SessionLabel label;
};

FeatureVector featurize(const Window& window, const FeatureVocabulary& vocab,
                        const LexiconSet& lex, const FeatureConfig& cfg = {});

std::vector<std::string> feature_names(const FeatureVocabulary& vocab);

}  // namespace kstroke

#endif  // KSTROKE_FEATURES_HPP_
