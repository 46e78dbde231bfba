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

#include <cmath>

#include "kstroke/deception.hpp"
#include "kstroke/errors.hpp"
#include "kstroke/keymap.hpp"
#include "kstroke/random.hpp"
#include "oracles.hpp"

namespace kstroke {
namespace {

using testing::down;
using testing::up;

class ConstantDetector : public Detector {
 public:
  explicit ConstantDetector(double score) : score_(score) {}
  double score(const Session&) const override { return score_; }
  double threshold() const override { return 0.5; }

 private:
  double score_;
};

// Dictionary with fixed statistics for letters a-z (keycodes 65-90).
TimingDictionary flat_dictionary(double dwell, double dwell_sd, double interval,
                                 double interval_sd) {
  TimingDictionary d;
  for (int k = 0; k < 256; ++k) d.pooled.kht[k] = {dwell, dwell_sd, 10};
  d.global_kht = {dwell, dwell_sd, 100};
  d.global_kit = {interval, interval_sd, 100};
  return d;
}

std::vector<double> dwells_of(const std::vector<KeyEvent>& events, int key) {
  std::vector<double> out;
  for (const Keystroke& k : match_keystrokes(events)) {
    if (k.keycode == key) out.push_back(k.up - k.down);
  }
  return out;
}

TEST(Dictionary, PopulationStatistics) {
  const Session s = testing::make_session(
      {down(65, 0), up(65, 80), down(65, 200), up(65, 300), down(65, 400), up(65, 520)});
  const TimingDictionary d = build_dictionary(std::vector<Session>{s});
  const TimingStat a = d.per_user.at("u").kht.at(65);
  EXPECT_DOUBLE_EQ(a.mean, 100.0);
  EXPECT_NEAR(a.sd, 16.3299316, 1e-6);
  EXPECT_EQ(a.n, 3u);
  EXPECT_EQ(d.pooled.kht.at(65), a);
}

TEST(Dictionary, SingleObservationHasZeroSpread) {
  const Session s = testing::make_session({down(65, 0), up(65, 80)});
  const TimingDictionary d = build_dictionary(std::vector<Session>{s});
  EXPECT_EQ(d.pooled.kht.at(65).sd, 0.0);
  EXPECT_EQ(d.pooled.kht.at(65).n, 1u);
}

TEST(Dictionary, PoolsUsersAndSkipsAssisted) {
  const std::vector<Session> sessions = {
      testing::make_session({down(65, 0), up(65, 80)}, Mode::BonaFide, "u1"),
      testing::make_session({down(65, 0), up(65, 120)}, Mode::BonaFide, "u2"),
      testing::make_session({down(65, 0), up(65, 900)}, Mode::Transcribed, "u3")};
  const TimingDictionary d = build_dictionary(sessions);
  EXPECT_DOUBLE_EQ(d.pooled.kht.at(65).mean, 100.0);
  EXPECT_EQ(d.per_user.size(), 2u);
  EXPECT_FALSE(d.per_user.contains("u3"));
  const std::vector<Session> only_assisted = {sessions[2]};
  EXPECT_THROW(build_dictionary(only_assisted), ForgeError);
}

TEST(Forge, ZeroSpreadReproducesMeans) {
  TimingDictionary d;
  d.pooled.kht[65] = {80, 0, 3};
  d.pooled.kht[66] = {90, 0, 3};
  d.pooled.kit[{65, 66}] = {150, 0, 3};
  d.global_kht = {100, 0, 6};
  d.global_kit = {200, 0, 6};
  AttackConfig cfg;
  cfg.backspace_prob = 0;
  cfg.sigma_floor = 0;
  const ForgedSequence f = forge("ab", d, std::nullopt, cfg);
  const std::vector<KeyEvent> expected = {down(65, 0), up(65, 80), down(66, 150), up(66, 240)};
  EXPECT_EQ(f.events, expected);
  EXPECT_EQ(reconstruct_text(f.events), "ab");
}

TEST(Forge, SevenCharactersOneEpisode) {
  AttackConfig cfg;
  cfg.backspace_prob = 1.0;
  cfg.backspace_gap = 6;
  const ForgedSequence f = forge("abcdefg", flat_dictionary(90, 10, 180, 30), std::nullopt, cfg);
  EXPECT_EQ(f.backspace_opportunities, 1u);
  EXPECT_EQ(f.backspace_episodes, 1u);
  EXPECT_EQ(f.events.size(), 2u * (7 + 2));
  EXPECT_EQ(reconstruct_text(f.events), "abcdefg");
}

TEST(Forge, SeededDeterminism) {
  AttackConfig cfg;
  cfg.seed = 77;
  const auto d = flat_dictionary(90, 15, 180, 40);
  const ForgedSequence a = forge("The Quick brown fox, again!", d, std::nullopt, cfg);
  const ForgedSequence b = forge("The Quick brown fox, again!", d, std::nullopt, cfg);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.backspace_episodes, b.backspace_episodes);
  cfg.seed = 78;
  EXPECT_NE(forge("The Quick brown fox, again!", d, std::nullopt, cfg).events, a.events);
}

TEST(Forge, TotalOverPrintableTextAndValid) {
  // Tiny dictionary: most keys and every digraph fall back to global stats.
  TimingDictionary d;
  d.pooled.kht[65] = {80, 5, 3};
  d.global_kht = {95, 20, 6};
  d.global_kit = {190, 60, 6};
  std::string text;
  for (char c = ' '; c <= '~'; ++c) text += c;
  text += "\n\tEnd.";
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AttackConfig cfg;
    cfg.seed = seed;
    const ForgedSequence f = forge(text, d, std::nullopt, cfg);
    const ValidationResult v = validate_events(f.events);
    EXPECT_EQ(v.dropped, 0u);
    EXPECT_EQ(v.events, f.events);
    EXPECT_EQ(reconstruct_text(f.events), text);
    for (const Keystroke& k : match_keystrokes(f.events)) EXPECT_GE(k.up - k.down, 1.0);
  }
}

TEST(Forge, ShiftWrapsUppercase) {
  AttackConfig cfg;
  cfg.backspace_prob = 0;
  const ForgedSequence f = forge("Hi", flat_dictionary(90, 10, 180, 30), std::nullopt, cfg);
  ASSERT_EQ(f.events.size(), 6u);
  EXPECT_EQ(f.events[0], down(keymap::kShift, 0));
  EXPECT_EQ(reconstruct_text(f.events), "Hi");
}

TEST(Forge, Errors) {
  const auto d = flat_dictionary(90, 10, 180, 30);
  EXPECT_THROW(forge("caf\xc3\xa9", d, std::nullopt, {}), ForgeError);
  AttackConfig atu;
  atu.mode = AttackMode::AtU;
  EXPECT_THROW(forge("abc", d, std::nullopt, atu), ForgeError);
  EXPECT_THROW(forge("abc", d, std::string("ghost"), atu), ForgeError);
  AttackConfig bad;
  bad.backspace_prob = 1.5;
  EXPECT_THROW(forge("abc", d, std::nullopt, bad), ConfigError);
  EXPECT_EQ(parse_attack_mode("at-u"), AttackMode::AtU);
  EXPECT_THROW(parse_attack_mode("at-x"), ConfigError);
}

TEST(Forge, AtUsesUserStatistics) {
  TimingDictionary d = flat_dictionary(90, 0, 180, 0);
  d.per_user["alice"].kht[65] = {300, 0, 5};
  AttackConfig cfg;
  cfg.mode = AttackMode::AtU;
  cfg.backspace_prob = 0;
  cfg.sigma_floor = 0;
  const ForgedSequence f = forge("aa", d, std::string("alice"), cfg);
  EXPECT_EQ(dwells_of(f.events, 65), (std::vector<double>{300, 300}));
  EXPECT_EQ(f.provenance.at("source_user"), "alice");
}

TEST(Forge, DwellMeanWithinThreeStandardErrors) {
  const double mu = 110, sigma = 25;
  const auto d = flat_dictionary(mu, sigma, 200, 40);
  AttackConfig cfg;
  cfg.backspace_prob = 0;
  cfg.seed = 4;
  const ForgedSequence f = forge(std::string(1000, 'a'), d, std::nullopt, cfg);
  const auto xs = dwells_of(f.events, 65);
  ASSERT_EQ(xs.size(), 1000u);
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  EXPECT_LE(std::abs(mean - mu), 3 * sigma / std::sqrt(1000.0));
}

TEST(Forge, BackspaceFrequencyTracksProbability) {
  Rng rng(2);
  std::string text;
  while (text.size() < 75000) text += static_cast<char>('a' + rng.index(26));
  AttackConfig cfg;
  cfg.seed = 5;
  const ForgedSequence f = forge(text, flat_dictionary(90, 10, 150, 20), std::nullopt, cfg);
  ASSERT_GE(f.backspace_opportunities, 10000u);
  const double freq =
      static_cast<double>(f.backspace_episodes) / static_cast<double>(f.backspace_opportunities);
  EXPECT_LE(std::abs(freq - cfg.backspace_prob), 0.05 * cfg.backspace_prob);
}

TEST(Attack, TrivialDetectors) {
  AttackConfig cfg;
  const auto d = flat_dictionary(90, 10, 180, 30);
  std::vector<ForgedSequence> forged;
  for (std::uint64_t i = 0; i < 10; ++i) {
    cfg.seed = i;
    forged.push_back(forge("some forged answer", d, std::nullopt, cfg));
  }
  EXPECT_EQ(attack_eval(ConstantDetector(1.0), forged), 0.0);
  EXPECT_EQ(attack_eval(ConstantDetector(0.0), forged), 1.0);
}

TEST(Augment, RatioCountsAndLabels) {
  std::vector<Session> train;
  for (int u = 0; u < 4; ++u) {
    Session bf = testing::make_session(testing::strokes({72, 73, 32, 84, 72, 69, 82, 69}),
                                       Mode::BonaFide, "u" + std::to_string(u), "bf");
    Session as = bf;
    as.session_id = "as";
    as.mode = Mode::Transcribed;
    as.text = "a different text";
    train.push_back(bf);
    train.push_back(as);
  }
  const TimingDictionary d = build_dictionary(train);
  AttackConfig cfg;
  cfg.seed = 1;
  EXPECT_EQ(adversarial_augment(train, d, cfg, 0.0), train);
  const auto aug = adversarial_augment(train, d, cfg, 1.0);
  ASSERT_EQ(aug.size(), train.size() + 4);
  for (std::size_t i = train.size(); i < aug.size(); ++i) {
    EXPECT_TRUE(aug[i].label().is_assisted);
    EXPECT_EQ(reconstruct_text(aug[i].events), "a different text");
  }
  EXPECT_EQ(adversarial_augment(train, d, cfg, 1.0), aug);
  EXPECT_EQ(adversarial_augment(train, d, cfg, 0.5).size(), train.size() + 2);
}

}  // namespace
}  // namespace kstroke
