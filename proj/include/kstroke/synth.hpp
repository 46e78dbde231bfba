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

// Synthetic typists. A profile gives Gaussian dwell and press-to-press
// interval distributions, a rate of long pauses (>= 2 s), a rate of revision
// episodes (wrong key, Backspace, correct key) and an optional rate of short
// hesitations. Regimes rescale a profile: transcription pauses and revises
// far less and types more evenly; paraphrasing sits in between.
//
// These corpora stand in for restricted keystroke datasets so the pipeline
// can be exercised end to end. They are not a model of real typing.

#ifndef KSTROKE_SYNTH_HPP_
#define KSTROKE_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kstroke/logmodel.hpp"
#include "kstroke/random.hpp"

namespace kstroke {

struct TypistProfile {
  double dwell_mu = 95.0;  // ms
  double dwell_sigma = 22.0;
  double interval_mu = 190.0;  // press-to-press, ms
  double interval_sigma = 55.0;
  double pause_rate = 3.0;       // long pauses per 100 keys
  double pause_scale = 1500.0;   // ms beyond the 2 s floor, exponential
  double revision_rate = 4.0;    // revision episodes per 100 keys
  double hesitation_rate = 6.0;  // short (< 2 s) hesitations per 100 keys
  double hesitation_scale = 350.0;
  double key_spread = 0.12;  // per-key relative spread of dwell/interval means

  // Non-negative fields with sigma <= mu. Throws ConfigError.
  void validate() const;
};

struct RegimeSpec {
  Mode mode = Mode::BonaFide;
  double pause_mult = 1.0;
  double revision_mult = 1.0;
  double hesitation_mult = 1.0;
  double dwell_mu_mult = 1.0;
  double dwell_sigma_mult = 1.0;
  double interval_mu_mult = 1.0;
  double interval_sigma_mult = 1.0;

  // Built-in deltas for BonaFide, Transcribed and Paraphrased.
  static RegimeSpec defaults(Mode mode);
  TypistProfile apply(const TypistProfile& p) const;
};

// Population hyperprior: per-user profiles scatter around `mean` with
// relative standard deviation `spread` (log-normal factors).
struct PopulationPrior {
  TypistProfile mean;
  double spread = 0.15;

  // JSON object with optional "spread" and any TypistProfile field names.
  static PopulationPrior from_json_text(std::string_view text);
  static PopulationPrior load(const std::filesystem::path& path);
  TypistProfile draw(Rng& rng) const;
};

struct CorpusOptions {
  std::string dataset = "synth";
  std::string user_prefix = "u";
  PopulationPrior prior;
  std::vector<std::string> keyboards = {"K0", "K1", "K2", "K3"};  // by user
  std::vector<std::string> contexts = {"GM", "GC", "RF"};          // by session
  // Whole-dataset shift, for cross-dataset experiments.
  double dataset_dwell_mult = 1.0;
  double dataset_interval_mult = 1.0;
  std::filesystem::path word_list;  // empty: bundled dictionary.txt
};

// Per-user key factors: relative offsets of dwell and interval means per key.
struct KeyFactors {
  std::vector<double> dwell;     // 256 entries
  std::vector<double> interval;  // 256 entries, indexed by the key pressed

  static KeyFactors draw(double spread, Rng& rng);
  static KeyFactors flat();
};

// Types `text` with profile `p`. Deterministic in `rng`.
std::vector<KeyEvent> simulate_typing(std::string_view text, const TypistProfile& p,
                                      const KeyFactors& factors, Rng& rng);

// Sentences of random words until at least `min_chars` characters.
std::string random_text(std::span<const std::string> words, std::size_t min_chars, Rng& rng);

std::vector<std::string> load_word_list(const std::filesystem::path& path);

// n_users x regimes x sessions_per_user sessions; chars_per_session >= 300.
// Session ids are "<regime>-<k>"; users get keyboards round-robin and sessions
// get contexts round-robin.
std::vector<Session> generate_corpus(std::size_t n_users, std::size_t sessions_per_user,
                                     std::size_t chars_per_session,
                                     std::span<const RegimeSpec> regimes, std::uint64_t seed,
                                     const CorpusOptions& options = {});

}  // namespace kstroke

#endif  // KSTROKE_SYNTH_HPP_
