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

#include "kstroke/features.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <tuple>

#include "kstroke/errors.hpp"
#include "kstroke/keymap.hpp"
#include "kstroke/random.hpp"

#ifndef KSTROKE_DEFAULT_LEXICON_DIR
#define KSTROKE_DEFAULT_LEXICON_DIR "data/lexicon"
#endif

namespace kstroke {
namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::unordered_set<std::string> read_list(const std::filesystem::path& file, bool required) {
  std::unordered_set<std::string> out;
  std::ifstream in(file);
  if (!in) {
    if (required) throw ConfigError("missing lexicon file " + file.string());
    return out;
  }
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    if (b == line.size() || line[b] == '#') continue;
    std::string word = line.substr(b);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(std::move(word));
  }
  return out;
}

struct Token {
  std::string text;
  std::size_t sentence;
  bool sentence_initial;
};

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'';
}

}  // namespace

std::string_view to_string(KitVariant v) {
  return v == KitVariant::PressPress ? "press-press" : "release-press";
}

KitVariant parse_kit_variant(std::string_view text) {
  if (text == "press-press" || text == "pp" || text == "PressPress") return KitVariant::PressPress;
  if (text == "release-press" || text == "rp" || text == "ReleasePress") {
    return KitVariant::ReleasePress;
  }
  throw ConfigError("unknown KIT variant '" + std::string(text) + "'");
}

std::vector<Keystroke> match_keystrokes(std::span<const KeyEvent> events) {
  std::array<std::deque<std::size_t>, 256> pending;
  std::vector<Keystroke> strokes;
  std::vector<bool> closed;
  for (const KeyEvent& e : events) {
    auto& queue = pending[static_cast<std::size_t>(e.keycode)];
    if (e.action == KeyAction::Down) {
      queue.push_back(strokes.size());
      strokes.push_back({e.keycode, e.timestamp, e.timestamp});
      closed.push_back(false);
    } else if (!queue.empty()) {
      const std::size_t idx = queue.front();
      queue.pop_front();
      strokes[idx].up = e.timestamp;
      closed[idx] = true;
    }
  }
  std::vector<Keystroke> out;
  out.reserve(strokes.size());
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    if (closed[i]) out.push_back(strokes[i]);
  }
  return out;
}

TimingObs extract_timing(std::span<const KeyEvent> events, KitVariant variant) {
  TimingObs obs;
  const std::vector<Keystroke> strokes = match_keystrokes(events);
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const Keystroke& k = strokes[i];
    obs.kht[k.keycode].push_back(k.up - k.down);
    if (i > 0) {
      const Keystroke& prev = strokes[i - 1];
      const double interval =
          variant == KitVariant::PressPress ? k.down - prev.down : k.down - prev.up;
      obs.kit[{prev.keycode, k.keycode}].push_back(interval);
    }
  }
  return obs;
}

std::vector<int> FeatureVocabulary::unigrams() const {
  std::vector<int> out;
  for (const VocabItem& it : items) {
    if (!it.is_digraph()) out.push_back(it.first);
  }
  return out;
}

std::vector<Digraph> FeatureVocabulary::digraphs() const {
  std::vector<Digraph> out;
  for (const VocabItem& it : items) {
    if (it.is_digraph()) out.emplace_back(it.first, it.second);
  }
  return out;
}

FeatureVocabulary build_vocabulary(std::span<const Window> training_windows, std::size_t budget,
                                   VocabBudget mode) {
  if (training_windows.empty()) throw ConfigError("vocabulary needs at least one window");

  std::map<int, std::size_t> uni;
  std::map<Digraph, std::size_t> di;
  Fingerprint fp;
  for (const Window& w : training_windows) {
    fp.update(w.session_key);
    fp.update(static_cast<std::uint64_t>(w.start_index));
    fp.update(static_cast<std::uint64_t>(w.events.size()));
    const std::vector<Keystroke> strokes = match_keystrokes(w.events);
    for (std::size_t i = 0; i < strokes.size(); ++i) {
      ++uni[strokes[i].keycode];
      if (i > 0) ++di[{strokes[i - 1].keycode, strokes[i].keycode}];
    }
  }

  std::vector<VocabItem> ranked;
  ranked.reserve(uni.size() + di.size());
  for (const auto& [k, c] : uni) ranked.push_back({k, -1, c});
  for (const auto& [k, c] : di) ranked.push_back({k.first, k.second, c});
  auto rank_key = [](const VocabItem& v) {
    return std::make_tuple(-static_cast<long long>(v.count), v.is_digraph() ? 1 : 0, v.first,
                           v.second);
  };
  std::stable_sort(ranked.begin(), ranked.end(), [&](const VocabItem& a, const VocabItem& b) {
    return rank_key(a) < rank_key(b);
  });

  FeatureVocabulary vocab;
  if (mode == VocabBudget::Combined) {
    const std::size_t keep = std::min(budget, ranked.size());
    vocab.items.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep));
  } else {
    std::size_t n_uni = 0, n_di = 0;
    for (const VocabItem& v : ranked) {
      std::size_t& n = v.is_digraph() ? n_di : n_uni;
      if (n < budget) {
        vocab.items.push_back(v);
        ++n;
      }
    }
  }
  for (const VocabItem& v : vocab.items) {
    fp.update(static_cast<std::uint64_t>(v.first + 1));
    fp.update(static_cast<std::uint64_t>(v.second + 1));
    fp.update(static_cast<std::uint64_t>(v.count));
  }
  vocab.fingerprint = fp.hex();
  return vocab;
}

LexiconSet LexiconSet::load(const std::filesystem::path& dir) {
  LexiconSet lex;
  lex.dictionary = read_list(dir / "dictionary.txt", true);
  lex.modals = read_list(dir / "modals.txt", true);
  lex.function_words = read_list(dir / "function_words.txt", false);
  lex.nouns = read_list(dir / "nouns.txt", false);
  lex.verbs = read_list(dir / "verbs.txt", false);
  lex.adjectives = read_list(dir / "adjectives.txt", false);
  lex.adverbs = read_list(dir / "adverbs.txt", false);
  return lex;
}

std::filesystem::path LexiconSet::default_dir() {
  if (const char* env = std::getenv("KSTROKE_LEXICON_DIR"); env && *env) return env;
  return KSTROKE_DEFAULT_LEXICON_DIR;
}

WordClass classify_word(std::string_view w, const LexiconSet& lex) {
  if (w.empty()) return WordClass::Other;
  if (std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return WordClass::Other;
  }
  const std::string word(w);
  if (lex.modals.contains(word)) return WordClass::Modal;
  if (lex.function_words.contains(word)) return WordClass::Function;
  if (lex.nouns.contains(word)) return WordClass::Noun;
  if (lex.verbs.contains(word)) return WordClass::Verb;
  if (lex.adjectives.contains(word)) return WordClass::Adjective;
  if (lex.adverbs.contains(word)) return WordClass::Adverb;

  if (w.size() > 3 && ends_with(w, "ly")) return WordClass::Adverb;
  if (w.size() > 4) {
    for (std::string_view suf : {"ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ish"}) {
      if (ends_with(w, suf)) return WordClass::Adjective;
    }
    for (std::string_view suf : {"ize", "ise", "ify", "ate", "ed", "ing"}) {
      if (ends_with(w, suf)) return WordClass::Verb;
    }
  }
  return WordClass::Noun;
}

std::array<double, kLinguisticCount> LinguisticFeatures::to_array() const {
  return {word_count,
          backspaces_per_sentence,
          avg_word_length,
          nouns_per_sentence,
          verbs_per_sentence,
          modifiers_per_sentence,
          modals_per_sentence,
          named_entities_per_sentence,
          lexical_density,
          spelling_mistakes,
          special_chars_per_sentence,
          keystrokes_per_burst};
}

const std::array<std::string_view, kLinguisticCount>& LinguisticFeatures::names() {
  static const std::array<std::string_view, kLinguisticCount> kNames = {
      "word_count",
      "backspaces_per_sentence",
      "avg_word_length",
      "nouns_per_sentence",
      "verbs_per_sentence",
      "modifiers_per_sentence",
      "modals_per_sentence",
      "named_entities_per_sentence",
      "lexical_density",
      "spelling_mistakes",
      "special_chars_per_sentence",
      "keystrokes_per_burst"};
  return kNames;
}

LinguisticFeatures extract_linguistic(std::span<const KeyEvent> events, const LexiconSet& lex,
                                      double pause_threshold_ms) {
  LinguisticFeatures f;
  const std::string text = reconstruct_text(events);

  // Tokenize and assign sentence indices; a sentence counts once it holds a word.
  std::vector<Token> tokens;
  std::size_t sentence = 0;
  bool sentence_has_word = false;
  std::size_t special = 0;
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      tokens.push_back({text.substr(i, j - i), sentence, !sentence_has_word});
      sentence_has_word = true;
      i = j;
      continue;
    }
    if (!std::isspace(static_cast<unsigned char>(c))) ++special;
    if ((c == '.' || c == '!' || c == '?') && sentence_has_word) {
      ++sentence;
      sentence_has_word = false;
    }
    ++i;
  }
  const std::size_t n_sentences = sentence + (sentence_has_word ? 1 : 0);

  std::size_t nouns = 0, verbs = 0, modifiers = 0, modals = 0, entities = 0, content = 0,
              misspelled = 0, letters = 0;
  for (const Token& t : tokens) {
    letters += t.text.size();
    std::string w = t.text;
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    switch (classify_word(w, lex)) {
      case WordClass::Noun: ++nouns; ++content; break;
      case WordClass::Verb: ++verbs; ++content; break;
      case WordClass::Adjective:
      case WordClass::Adverb: ++modifiers; ++content; break;
      case WordClass::Modal: ++modals; break;
      case WordClass::Function:
      case WordClass::Other: break;
    }
    if (!t.sentence_initial && std::isupper(static_cast<unsigned char>(t.text[0])) &&
        t.text != "I") {
      ++entities;
    }
    const bool alphabetic = std::all_of(w.begin(), w.end(), [](unsigned char c) {
      return std::isalpha(c) || c == '\'';
    });
    if (alphabetic && !lex.dictionary.contains(w)) {
      const auto apos = w.find('\'');
      if (apos == std::string::npos || !lex.dictionary.contains(w.substr(0, apos))) ++misspelled;
    }
  }

  std::size_t backspaces = 0;
  std::vector<double> downs;
  for (const KeyEvent& e : events) {
    if (e.action != KeyAction::Down) continue;
    downs.push_back(e.timestamp);
    if (e.keycode == keymap::kBackspace) ++backspaces;
  }

  f.word_count = static_cast<double>(tokens.size());
  f.avg_word_length =
      tokens.empty() ? 0.0 : static_cast<double>(letters) / static_cast<double>(tokens.size());
  f.lexical_density =
      tokens.empty() ? 0.0 : static_cast<double>(content) / static_cast<double>(tokens.size());
  f.spelling_mistakes = static_cast<double>(misspelled);
  if (n_sentences > 0) {
    const double ns = static_cast<double>(n_sentences);
    f.backspaces_per_sentence = static_cast<double>(backspaces) / ns;
    f.nouns_per_sentence = static_cast<double>(nouns) / ns;
    f.verbs_per_sentence = static_cast<double>(verbs) / ns;
    f.modifiers_per_sentence = static_cast<double>(modifiers) / ns;
    f.modals_per_sentence = static_cast<double>(modals) / ns;
    f.named_entities_per_sentence = static_cast<double>(entities) / ns;
    f.special_chars_per_sentence = static_cast<double>(special) / ns;
  }
  if (!downs.empty()) {
    std::size_t bursts = 1;
    for (std::size_t i = 1; i < downs.size(); ++i) {
      if (downs[i] - downs[i - 1] >= pause_threshold_ms) ++bursts;
    }
    f.keystrokes_per_burst = static_cast<double>(downs.size()) / static_cast<double>(bursts);
  }
  return f;
}

FeatureVector featurize(const Window& window, const FeatureVocabulary& vocab,
                        const LexiconSet& lex, const FeatureConfig& cfg) {
  FeatureVector fv;
  fv.label = window.label;
  fv.values.reserve(vocab.size() + kLinguisticCount);
  const TimingObs obs = extract_timing(window.events, cfg.kit);
  auto mean_or_missing = [&](const std::vector<double>* xs) {
    if (xs == nullptr || xs->size() < std::max<std::size_t>(cfg.min_observations, 1)) {
      return kMissing;
    }
    double sum = 0.0;
    for (double x : *xs) sum += x;
    return sum / static_cast<double>(xs->size());
  };
  for (const VocabItem& item : vocab.items) {
    const std::vector<double>* xs = nullptr;
    if (item.is_digraph()) {
      if (auto it = obs.kit.find({item.first, item.second}); it != obs.kit.end()) xs = &it->second;
    } else {
      if (auto it = obs.kht.find(item.first); it != obs.kht.end()) xs = &it->second;
    }
    fv.values.push_back(mean_or_missing(xs));
  }
  const auto ling = extract_linguistic(window.events, lex, cfg.pause_threshold_ms).to_array();
  fv.values.insert(fv.values.end(), ling.begin(), ling.end());
  return fv;
}

std::vector<std::string> feature_names(const FeatureVocabulary& vocab) {
  std::vector<std::string> names;
  for (const VocabItem& it : vocab.items) {
    if (it.is_digraph()) {
      names.push_back("kit_" + std::to_string(it.first) + "_" + std::to_string(it.second));
    } else {
      names.push_back("kht_" + std::to_string(it.first));
    }
  }
  for (std::string_view n : LinguisticFeatures::names()) names.emplace_back(n);
  return names;
}

}  // namespace kstroke
