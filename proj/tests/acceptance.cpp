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

// Acceptance suite: one PASS/FAIL line per criterion, each with its measured
// value and wall time. Exit status is non-zero when any criterion fails.
// The end-to-end criteria run on synthetic corpora, not on real typing data.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kstroke/deception.hpp"
#include "kstroke/eval.hpp"
#include "kstroke/features.hpp"
#include "kstroke/gbdt.hpp"
#include "kstroke/persistence.hpp"
#include "kstroke/pipeline.hpp"
#include "kstroke/random.hpp"
#include "kstroke/segmenter.hpp"
#include "kstroke/siamese.hpp"
#include "kstroke/synth.hpp"
#include "oracles.hpp"

namespace kstroke {
namespace {

namespace oracle = kstroke::testing;

struct Outcome {
  bool ok = false;
  std::string measured;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= budget_s;
  const bool pass = o.ok && in_time;
  if (!pass) ++failures;
  std::printf("%s %s (%s, %.2fs of %.0fs)%s\n", pass ? "PASS" : "FAIL", name.c_str(),
              o.measured.c_str(), secs, budget_s, in_time ? "" : " over time budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- timing fixture ---------------------------------------------------------

Outcome timing_fixture() {
  const auto o = oracle::load_json(oracle::fixture_path("timing_oracle.json"));
  const Session s =
      parse_canonical_file(oracle::fixture_path("timing_fixture.jsonl")).sessions.at(0);
  std::map<int, std::vector<double>> kht;
  for (const auto& [k, v] : o["kht"].items()) kht[std::stoi(k)] = v.get<std::vector<double>>();
  auto kit = [](const nlohmann::json& rows) {
    std::map<Digraph, std::vector<double>> out;
    for (const auto& r : rows) out[{r[0].get<int>(), r[1].get<int>()}] = r[2].get<std::vector<double>>();
    return out;
  };
  const TimingObs pp = extract_timing(s.events, KitVariant::PressPress);
  const TimingObs rp = extract_timing(s.events, KitVariant::ReleasePress);
  int wrong = 0;
  wrong += pp.kht != kht;
  wrong += rp.kht != kht;
  wrong += pp.kit != kit(o["kit_press_press"]);
  wrong += rp.kit != kit(o["kit_release_press"]);

  const LexiconSet lex = oracle::fixture_lexicon(o);
  FeatureVocabulary vocab;
  for (const auto& item : o["vocabulary"]) vocab.items.push_back({item[0].get<int>(), item[1].get<int>(), 1});
  Window w;
  w.events = s.events;
  FeatureConfig cfg;
  wrong += featurize(w, vocab, lex, cfg).values != o["features_press_press"].get<std::vector<double>>();
  cfg.kit = KitVariant::ReleasePress;
  wrong += featurize(w, vocab, lex, cfg).values != o["features_release_press"].get<std::vector<double>>();
  return {wrong == 0, std::to_string(6 - wrong) + "/6 tables exact"};
}

// --- segmentation -----------------------------------------------------------

Outcome window_counts() {
  Rng rng(2024);
  int bad = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    SegmentConfig cfg;
    cfg.window_size = 2 + rng.index(200);
    cfg.overlap = rng.index(cfg.window_size);
    const std::size_t n = 1 + rng.index(10 * cfg.window_size);
    Session s;
    s.user_id = "u";
    s.session_id = "s";
    s.dataset = "d";
    for (std::size_t i = 0; i < n; ++i) s.events.push_back({KeyAction::Down, 65, static_cast<double>(i)});
    const auto ws = segment(s, cfg);
    const auto expected = oracle::enumerate_windows(n, cfg.window_size, cfg.overlap, cfg.min_tail_fraction);
    bool same = ws.size() == expected.size() &&
                ws.size() == oracle::window_count_formula(n, cfg.window_size, cfg.overlap,
                                                          cfg.min_tail_fraction);
    for (std::size_t i = 0; same && i < ws.size(); ++i) {
      same = ws[i].start_index == expected[i].first && ws[i].events.size() == expected[i].second;
    }
    bad += !same;
  }
  return {bad == 0, std::to_string(trials - bad) + "/" + std::to_string(trials) + " exact"};
}

// --- EER --------------------------------------------------------------------

Outcome eer_brute_force() {
  Rng rng(99);
  int bad = 0;
  const int sets = 200;
  for (int t = 0; t < sets; ++t) {
    const std::size_t n = 2 + rng.index(499);
    std::vector<ScoredLabel> xs;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pos = i == 0 ? true : (i == 1 ? false : rng.uniform(0, 1) < 0.5);
      // Coarse grid on odd sets forces ties.
      double score = rng.uniform(0, 1) + (pos ? 0.2 : 0.0);
      if (t % 2) score = std::round(score * 10) / 10;
      xs.push_back({score, pos});
    }
    const EerResult got = roc_eer(xs);
    const auto want = oracle::brute_force_eer(xs);
    bad += !(got.eer == want.eer && got.threshold == want.threshold && got.far == want.far &&
             got.frr == want.frr);
  }
  return {bad == 0, std::to_string(sets - bad) + "/" + std::to_string(sets) + " exact"};
}

// --- GBDT -------------------------------------------------------------------

std::vector<FeatureVector> xor_set(std::size_t n, std::uint64_t seed, double noise) {
  Rng rng(seed);
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = (i % 2 == 0) ? 1.0 : -1.0;
    const double cy = (i / 2 % 2 == 0) ? 1.0 : -1.0;
    FeatureVector f;
    f.values = {rng.normal(cx, noise), rng.normal(cy, noise)};
    f.label.is_assisted = cx * cy > 0;
    out.push_back(f);
  }
  return out;
}

Outcome gbdt_xor() {
  const auto train = xor_set(200, 2, 0.3);
  const auto test = xor_set(200, 3, 0.3);
  GbdtConfig cfg;
  cfg.max_depth = 2;
  const GbdtModel m = train_gbdt(train, cfg, 4);
  std::size_t ok = 0;
  for (const auto& r : test) ok += (predict_proba(m, r) >= 0.5) == r.label.is_assisted;
  const double acc = static_cast<double>(ok) / static_cast<double>(test.size());

  bool monotone = true;
  for (std::size_t i = 1; i < m.train_loss.size(); ++i) monotone &= m.train_loss[i] <= m.train_loss[i - 1];

  std::set<std::string> hashes;
  for (int run = 0; run < 3; ++run) {
    Fingerprint fp;
    fp.update(to_json(train_gbdt(train, cfg, 4)).dump());
    hashes.insert(fp.hex());
  }
  std::ostringstream ss;
  ss << "test accuracy " << acc << ", loss " << (monotone ? "monotone" : "NOT monotone") << ", "
     << hashes.size() << " distinct hash(es) over 3 runs";
  return {acc >= 0.95 && monotone && hashes.size() == 1, ss.str()};
}

// --- Siamese ----------------------------------------------------------------

Outcome siamese_gradient() {
  SiameseConfig cfg;
  cfg.M = 25;
  cfg.hidden_dim = 8;
  cfg.dropout = 0.0;
  cfg.recurrent_dropout = 0.0;
  cfg.l2 = 1e-3;
  const GradientCheckResult r = gradient_check(cfg, 7);
  return {r.max_relative_error <= 1e-4 && r.n_parameters > 0,
          fmt("max relative error %.3g", r.max_relative_error) + " over " +
              std::to_string(r.n_parameters) + " parameters"};
}

// --- end to end on synthetic corpora ---------------------------------------

std::shared_ptr<const LexiconSet> lexicon() {
  static const auto lex = std::make_shared<const LexiconSet>(LexiconSet::load_default());
  return lex;
}

const std::vector<Session>& corpus_a() {
  static const std::vector<Session> c = [] {
    const std::vector<RegimeSpec> regimes = {RegimeSpec::defaults(Mode::BonaFide),
                                             RegimeSpec::defaults(Mode::Transcribed)};
    CorpusOptions o;
    o.dataset = "A";
    return generate_corpus(100, 10, 600, regimes, derive_seed(2026, 1), o);
  }();
  return c;
}

const std::vector<Session>& corpus_b() {
  static const std::vector<Session> c = [] {
    const std::vector<RegimeSpec> regimes = {RegimeSpec::defaults(Mode::BonaFide),
                                             RegimeSpec::defaults(Mode::Paraphrased)};
    CorpusOptions o;
    o.dataset = "B";
    o.user_prefix = "b";
    o.dataset_interval_mult = 1.15;
    return generate_corpus(40, 10, 600, regimes, derive_seed(2026, 2), o);
  }();
  return c;
}

double f1_of(ScenarioFamily family, std::span<const Session> sessions,
             std::vector<std::string> holdout = {}) {
  ScenarioSpec spec;
  spec.family = family;
  spec.holdout = std::move(holdout);
  spec.seed = 11;
  return run_scenario(PipelineConfig{}, sessions, spec, lexicon()).f1;
}

Outcome scenario_matrix() {
  const double user_specific = f1_of(ScenarioFamily::UserSpecific, corpus_a());
  const double user_agnostic = f1_of(ScenarioFamily::UserAgnostic, corpus_a());
  std::vector<Session> both = corpus_a();
  both.insert(both.end(), corpus_b().begin(), corpus_b().end());
  const double ds_specific = f1_of(ScenarioFamily::DatasetSpecific, both);
  const double ds_agnostic = f1_of(ScenarioFamily::DatasetAgnostic, both, {"B"});
  std::ostringstream ss;
  ss << "user-specific F1 " << user_specific << ", user-agnostic F1 " << user_agnostic
     << ", dataset-specific F1 " << ds_specific << " vs dataset-agnostic F1 " << ds_agnostic;
  return {user_specific >= 0.95 && user_agnostic >= 0.95 && ds_specific - ds_agnostic >= 0.05,
          ss.str()};
}

Outcome adversarial_training() {
  // Forty users keep the run short while leaving 8 held-out test users.
  std::vector<Session> sessions;
  for (const Session& s : corpus_a()) {
    if (std::stoi(s.user_id.substr(1)) < 40) sessions.push_back(s);
  }
  ScenarioSpec spec;
  spec.family = ScenarioFamily::UserAgnostic;
  spec.seed = 21;
  const SplitManifest m = make_split(sessions, spec);
  const auto train = select_sessions(sessions, m.train);
  const auto test = select_sessions(sessions, m.test);
  const PipelineConfig cfg;
  const auto before = train_detector(train, cfg, lexicon());

  // Held-out forgeries of the assisted test responses.
  const TimingDictionary dict = build_dictionary(train);
  std::vector<Session> forged;
  std::uint64_t i = 0;
  for (const Session& s : test) {
    if (!s.label().is_assisted) continue;
    AttackConfig a;
    a.mode = AttackMode::AtP;
    a.seed = derive_seed(31, 1000 + i);
    forged.push_back(to_session(forge(session_text(s), dict, std::nullopt, a), s.user_id,
                                "forged-" + std::to_string(i), s.dataset));
    ++i;
  }
  AttackConfig aug;
  aug.mode = AttackMode::AtP;
  aug.seed = derive_seed(31, 5000);
  const auto augmented = adversarial_augment(train, dict, aug, 1.0);
  const auto after = train_detector(augmented, cfg, lexicon());

  const double asr_before = attack_success_rate(*before, forged);
  const double asr_after = attack_success_rate(*after, forged);
  std::ostringstream ss;
  ss << "ASR " << asr_before << " before, " << asr_after << " after, over " << forged.size()
     << " held-out forgeries";
  return {asr_before >= 0.8 && asr_after <= 0.05, ss.str()};
}

// --- forgery fidelity --------------------------------------------------------

Outcome forgery_fidelity() {
  const double mu = 110, sigma = 25;
  TimingDictionary d;
  for (int k = 0; k < 256; ++k) d.pooled.kht[k] = {mu, sigma, 10};
  d.global_kht = {mu, sigma, 100};
  d.global_kit = {200, 40, 100};

  AttackConfig cfg;
  cfg.backspace_prob = 0;
  cfg.seed = 4;
  const ForgedSequence f = forge(std::string(1000, 'a'), d, std::nullopt, cfg);
  double mean = 0;
  std::size_t n = 0;
  for (const Keystroke& k : match_keystrokes(f.events)) {
    if (k.keycode != 65) continue;
    mean += k.up - k.down;
    ++n;
  }
  mean /= static_cast<double>(n);
  const double bound = 3 * sigma / std::sqrt(1000.0);
  const bool dwell_ok = n == 1000 && std::abs(mean - mu) <= bound;

  Rng rng(2);
  std::string text;
  while (text.size() < 75000) text += static_cast<char>('a' + rng.index(26));
  AttackConfig bs;
  bs.seed = 5;
  const ForgedSequence g = forge(text, d, std::nullopt, bs);
  const double freq =
      static_cast<double>(g.backspace_episodes) / static_cast<double>(g.backspace_opportunities);
  const bool bs_ok = g.backspace_opportunities >= 10000 &&
                     std::abs(freq - bs.backspace_prob) <= 0.05 * bs.backspace_prob;
  std::ostringstream ss;
  ss << "dwell mean " << mean << " vs " << mu << " (bound " << bound << "), backspace rate "
     << freq << " vs " << bs.backspace_prob << " over " << g.backspace_opportunities
     << " opportunities";
  return {dwell_ok && bs_ok, ss.str()};
}

// --- metric definitions -----------------------------------------------------

Outcome metric_tables() {
  Rng rng(5);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const ConfusionCounts c{1 + rng.index(50), 1 + rng.index(50), 1 + rng.index(50), 1 + rng.index(50)};
    const Metrics m = metrics_from_counts(c);
    const auto want = oracle::metric_oracle(c.tp, c.fp, c.tn, c.fn);
    const Metrics s = metrics_from_counts(c.swapped());
    bad += !(m.far == want.far && m.frr == want.frr && m.f1 == want.f1 && m.accuracy == want.accuracy &&
             s.far == m.frr && s.frr == m.far);
  }
  return {bad == 0, std::to_string(100 - bad) + "/100 tables exact"};
}

}  // namespace
}  // namespace kstroke

int main() {
  using namespace kstroke;
  std::printf("kstroke acceptance suite (synthetic corpora stand in for restricted datasets)\n");
  criterion("timing-extraction-fixture", 1, timing_fixture);
  criterion("window-count-vs-enumerator", 5, window_counts);
  criterion("eer-vs-brute-force", 10, eer_brute_force);
  criterion("gbdt-xor-monotone-deterministic", 60, gbdt_xor);
  criterion("siamese-gradient-check", 60, siamese_gradient);
  criterion("scenario-matrix-synthetic", 300, scenario_matrix);
  criterion("adversarial-training-asr", 300, adversarial_training);
  criterion("forgery-fidelity", 60, forgery_fidelity);
  criterion("far-frr-definitions-and-swap", 5, metric_tables);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
