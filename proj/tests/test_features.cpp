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

#include <gtest/gtest.h>

#include "kstroke/errors.hpp"
#include "kstroke/features.hpp"
#include "kstroke/keymap.hpp"
#include "kstroke/random.hpp"
#include "kstroke/segmenter.hpp"
#include "oracles.hpp"

namespace kstroke {
namespace {

using testing::down;
using testing::up;

Window window_of(std::vector<KeyEvent> ev, std::string key = "d/u/s") {
  Window w;
  w.session_key = std::move(key);
  w.events = std::move(ev);
  return w;
}

// Types `text`; '\b' is Backspace. Shift wraps shifted characters.
std::vector<KeyEvent> typed(const std::string& text, double gap = 150, double dwell = 80) {
  std::vector<KeyEvent> ev;
  double t = 100;
  for (char c : text) {
    int key = keymap::kBackspace;
    bool shift = false;
    if (c != '\b') {
      const auto ks = keymap::from_char(c);
      key = ks->keycode;
      shift = ks->shift;
    }
    if (shift) ev.push_back(down(keymap::kShift, t - 20));
    ev.push_back(down(key, t));
    ev.push_back(up(key, t + dwell));
    if (shift) ev.push_back(up(keymap::kShift, t + dwell + 10));
    t += gap;
  }
  return ev;
}

Session fixture_session() {
  return parse_canonical_file(testing::fixture_path("timing_fixture.jsonl")).sessions.at(0);
}

std::map<int, std::vector<double>> oracle_kht(const nlohmann::json& o) {
  std::map<int, std::vector<double>> out;
  for (const auto& [k, v] : o["kht"].items()) out[std::stoi(k)] = v.get<std::vector<double>>();
  return out;
}

std::map<Digraph, std::vector<double>> oracle_kit(const nlohmann::json& rows) {
  std::map<Digraph, std::vector<double>> out;
  for (const auto& r : rows) out[{r[0].get<int>(), r[1].get<int>()}] = r[2].get<std::vector<double>>();
  return out;
}

TEST(Timing, FixtureMatchesHandOracle) {
  const auto oracle = testing::load_json(testing::fixture_path("timing_oracle.json"));
  const Session s = fixture_session();
  ASSERT_EQ(s.events.size(), 20u);
  const TimingObs pp = extract_timing(s.events, KitVariant::PressPress);
  const TimingObs rp = extract_timing(s.events, KitVariant::ReleasePress);
  EXPECT_EQ(pp.kht, oracle_kht(oracle));
  EXPECT_EQ(rp.kht, oracle_kht(oracle));
  EXPECT_EQ(pp.kit, oracle_kit(oracle["kit_press_press"]));
  EXPECT_EQ(rp.kit, oracle_kit(oracle["kit_release_press"]));
  EXPECT_EQ(reconstruct_text(s.events), oracle["text"].get<std::string>());
}

TEST(Timing, SpecExamples) {
  const std::vector<KeyEvent> a = {down(65, 0), up(65, 80)};
  EXPECT_EQ(extract_timing(a, KitVariant::PressPress).kht.at(65), std::vector<double>{80});
  const std::vector<KeyEvent> ab = {down(65, 0), up(65, 80), down(66, 150), up(66, 230)};
  EXPECT_EQ(extract_timing(ab, KitVariant::PressPress).kit.at({65, 66}), std::vector<double>{150});
  EXPECT_EQ(extract_timing(ab, KitVariant::ReleasePress).kit.at({65, 66}),
            std::vector<double>{70});
}

TEST(Timing, DwellsNonNegativeAndRolloverOnlyUnderReleasePress) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<KeyEvent> ev;
    double t = 0;
    for (int i = 0; i < 40; ++i) {
      const int k = 65 + static_cast<int>(rng.index(26));
      ev.push_back(down(k, t));
      ev.push_back(up(k, t + rng.uniform(0, 300)));  // often overlaps the next press
      t += rng.uniform(1, 200);
    }
    ev = validate_events(ev).events;
    for (const auto& [k, xs] : extract_timing(ev, KitVariant::PressPress).kht) {
      for (double x : xs) EXPECT_GE(x, 0.0);
    }
    for (const auto& [k, xs] : extract_timing(ev, KitVariant::PressPress).kit) {
      for (double x : xs) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(Vocabulary, DigraphsCompeteWithUnigrams) {
  // E typed 50 times in a row: E 50, (E,E) 49. Then X/Y alternating 40 times
  // each: X 40, Y 40, (X,Y) 40.
  std::vector<int> keys(50, 69);
  for (int i = 0; i < 40; ++i) {
    keys.push_back(88);
    keys.push_back(89);
  }
  const std::vector<Window> ws = {window_of(testing::strokes(keys))};
  const auto v2 = build_vocabulary(ws, 2);
  ASSERT_EQ(v2.items.size(), 2u);
  EXPECT_EQ(v2.items[0].first, 69);
  EXPECT_FALSE(v2.items[0].is_digraph());
  EXPECT_EQ(v2.items[1].first, 69);
  EXPECT_EQ(v2.items[1].second, 69);
  EXPECT_EQ(v2.items[1].count, 49u);
  // Ties: unigrams before digraphs, then lower keycode.
  const auto v5 = build_vocabulary(ws, 5);
  EXPECT_EQ(v5.items[2].first, 88);
  EXPECT_EQ(v5.items[3].first, 89);
  EXPECT_TRUE(v5.items[4].is_digraph());
  EXPECT_EQ(v5.items[4].first, 88);
}

TEST(Vocabulary, EqualCountsPreferLowerKeycode) {
  const std::vector<Window> ws = {window_of(testing::strokes({66, 65}))};
  const auto v = build_vocabulary(ws, 1);
  ASSERT_EQ(v.items.size(), 1u);
  EXPECT_EQ(v.items[0].first, 65);
}

TEST(Vocabulary, SaturatesAndIsBitIdentical) {
  const std::vector<Window> ws = {window_of(testing::strokes({65, 66, 67, 65}))};
  const auto a = build_vocabulary(ws, 1000);
  EXPECT_EQ(a.items.size(), 3u + 3u);  // A B C, (A,B) (B,C) (C,A)
  const auto b = build_vocabulary(ws, 1000);
  EXPECT_EQ(a.items, b.items);
  EXPECT_EQ(a.fingerprint, b.fingerprint);
}

TEST(Vocabulary, PerKindBudget) {
  const std::vector<Window> ws = {window_of(testing::strokes({65, 66, 67, 65}))};
  const auto v = build_vocabulary(ws, 2, VocabBudget::PerKind);
  EXPECT_EQ(v.unigrams().size(), 2u);
  EXPECT_EQ(v.digraphs().size(), 2u);
}

TEST(Vocabulary, EmptyTrainingSetThrows) {
  EXPECT_THROW(build_vocabulary({}, 10), ConfigError);
}

TEST(Linguistic, HiThereWithOneBackspace) {
  const auto lex = LexiconSet::load_default();
  const auto f = extract_linguistic(typed("Hi therx\be."), lex);
  EXPECT_EQ(f.word_count, 2);
  EXPECT_EQ(f.backspaces_per_sentence, 1);
  EXPECT_EQ(f.avg_word_length, 3.5);
}

TEST(Linguistic, EmptyWindowIsAllZero) {
  const auto lex = LexiconSet::load_default();
  for (double v : extract_linguistic({}, lex).to_array()) EXPECT_EQ(v, 0.0);
}

TEST(Linguistic, BurstsSplitByLongPause) {
  std::vector<int> keys(10, 65);
  auto ev = testing::strokes(keys);
  for (std::size_t i = 8; i < ev.size(); ++i) ev[i].timestamp += 5000;  // after 4 keys
  const auto f = extract_linguistic(ev, LexiconSet::load_default());
  EXPECT_EQ(f.keystrokes_per_burst, 5);
}

TEST(Linguistic, NamedEntitiesModalsAndSpelling) {
  LexiconSet lex;
  lex.dictionary = {"we", "should", "visit", "paris"};
  lex.modals = {"should"};
  lex.function_words = {"we"};
  lex.verbs = {"visit"};
  const auto f = extract_linguistic(typed("We should visit Paris zzq."), lex);
  EXPECT_EQ(f.word_count, 5);
  EXPECT_EQ(f.modals_per_sentence, 1);
  EXPECT_EQ(f.verbs_per_sentence, 1);
  EXPECT_EQ(f.named_entities_per_sentence, 1);  // Paris, not sentence-initial We
  EXPECT_EQ(f.spelling_mistakes, 1);            // zzq
  EXPECT_EQ(f.special_chars_per_sentence, 1);
}

TEST(Featurize, FixtureMatchesHandOracle) {
  const auto oracle = testing::load_json(testing::fixture_path("timing_oracle.json"));
  const LexiconSet lex = testing::fixture_lexicon(oracle);
  FeatureVocabulary vocab;
  for (const auto& item : oracle["vocabulary"]) {
    vocab.items.push_back({item[0].get<int>(), item[1].get<int>(), 1});
  }
  const Session s = fixture_session();
  Window w = window_of(s.events);
  FeatureConfig cfg;
  EXPECT_EQ(featurize(w, vocab, lex, cfg).values,
            oracle["features_press_press"].get<std::vector<double>>());
  cfg.kit = KitVariant::ReleasePress;
  EXPECT_EQ(featurize(w, vocab, lex, cfg).values,
            oracle["features_release_press"].get<std::vector<double>>());
}

TEST(Featurize, MeanAndMissingSentinel) {
  FeatureVocabulary vocab;
  vocab.items = {{65, -1, 2}, {90, -1, 1}};
  const std::vector<KeyEvent> ev = {down(65, 0), up(65, 80), down(65, 200), up(65, 300)};
  const auto fv = featurize(window_of(ev), vocab, LexiconSet::load_default(), {});
  EXPECT_EQ(fv.values[0], 90.0);
  EXPECT_EQ(fv.values[1], kMissing);
  EXPECT_EQ(fv.values.size(), vocab.size() + kLinguisticCount);
}

TEST(Featurize, ConstantDimensionAndTranslationInvariance) {
  Rng rng(9);
  const auto lex = LexiconSet::load_default();
  std::vector<Window> ws;
  for (int i = 0; i < 20; ++i) {
    std::vector<KeyEvent> ev;
    double t = 0;
    for (int j = 0; j < 5 + i * 3; ++j) {
      const int k = 65 + static_cast<int>(rng.index(6));
      const double dwell = std::floor(rng.uniform(30, 150));
      ev.push_back(down(k, t));
      ev.push_back(up(k, t + dwell));
      t += std::floor(rng.uniform(dwell + 1, 2600));
    }
    ws.push_back(window_of(validate_events(ev).events, "d/u/" + std::to_string(i)));
  }
  const auto vocab = build_vocabulary(ws, 30);
  for (const Window& w : ws) {
    for (KitVariant kit : {KitVariant::PressPress, KitVariant::ReleasePress}) {
      FeatureConfig cfg;
      cfg.kit = kit;
      const auto base = featurize(w, vocab, lex, cfg);
      EXPECT_EQ(base.values.size(), vocab.size() + kLinguisticCount);
      Window shifted = w;
      const double offset = std::floor(rng.uniform(1, 1e6));
      for (KeyEvent& e : shifted.events) e.timestamp += offset;
      EXPECT_EQ(featurize(shifted, vocab, lex, cfg).values, base.values);
    }
  }
}

TEST(Featurize, FeatureNamesMatchDimension) {
  FeatureVocabulary vocab;
  vocab.items = {{65, -1, 2}, {65, 66, 1}};
  const auto names = feature_names(vocab);
  EXPECT_EQ(names.size(), 2 + kLinguisticCount);
  EXPECT_EQ(names.back(), "keystrokes_per_burst");
}

TEST(Lexicon, BundledListsLoad) {
  const auto lex = LexiconSet::load_default();
  EXPECT_FALSE(lex.dictionary.empty());
  EXPECT_TRUE(lex.modals.contains("should"));
  EXPECT_EQ(classify_word("should", lex), WordClass::Modal);
  EXPECT_EQ(classify_word("quickly", lex), WordClass::Adverb);
}

}  // namespace
}  // namespace kstroke
