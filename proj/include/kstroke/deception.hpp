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

// Keystroke forgery: timing dictionaries built from bona fide typing, a
// Gaussian sequence generator that retypes arbitrary text with borrowed
// timings, attack-success measurement, and adversarial augmentation.
//
// Lookup for a key or key pair goes user -> pooled -> global under At-U and
// pooled -> global under At-P. The global fallback draws the global mean
// plus uniform noise within +/- smoothing_width * global sigma.

#ifndef KSTROKE_DECEPTION_HPP_
#define KSTROKE_DECEPTION_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kstroke/features.hpp"
#include "kstroke/logmodel.hpp"
#include "kstroke/pipeline.hpp"

namespace kstroke {

struct TimingStat {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
  std::size_t n = 0;

  static TimingStat of(std::span<const double> xs);
  friend bool operator==(const TimingStat&, const TimingStat&) = default;
};

struct TimingTable {
  std::map<int, TimingStat> kht;
  std::map<Digraph, TimingStat> kit;

  friend bool operator==(const TimingTable&, const TimingTable&) = default;
};

struct TimingDictionary {
  KitVariant variant = KitVariant::PressPress;
  std::map<std::string, TimingTable> per_user;
  TimingTable pooled;
  TimingStat global_kht;
  TimingStat global_kit;

  friend bool operator==(const TimingDictionary&, const TimingDictionary&) = default;
};

// Uses bona fide (non-assisted) sessions only. Throws ForgeError when none
// carry a complete keystroke.
TimingDictionary build_dictionary(std::span<const Session> sessions,
                                  KitVariant variant = KitVariant::PressPress);

enum class AttackMode { AtU, AtP };

std::string_view to_string(AttackMode m);
AttackMode parse_attack_mode(std::string_view text);

struct AttackConfig {
  AttackMode mode = AttackMode::AtP;
  std::size_t backspace_gap = 6;
  double backspace_prob = 0.8;
  std::uint64_t seed = 0;
  double sigma_floor = 1.0;      // ms, applied at sampling time
  double smoothing_width = 0.5;  // global fallback noise, in global sigmas
  double min_sample = 1.0;       // ms
  int max_resample = 5;

  void validate() const;
};

struct ForgedSequence {
  std::vector<KeyEvent> events;
  std::string text;
  std::size_t backspace_opportunities = 0;
  std::size_t backspace_episodes = 0;
  std::map<std::string, std::string> provenance;
};

// Retypes `text` with dictionary timings. At-U requires `user` to be present
// in the dictionary. Throws ForgeError listing characters the keymap cannot
// type.
ForgedSequence forge(std::string_view text, const TimingDictionary& dict,
                     const std::optional<std::string>& user, const AttackConfig& cfg);

// Wraps a forgery as an assisted session.
Session to_session(const ForgedSequence& f, std::string user_id, std::string session_id,
                   std::string dataset);

// Share of forged sessions the detector accepts as bona fide.
double attack_success_rate(const Detector& detector, std::span<const Session> forged);
double attack_eval(const Detector& detector, std::span<const ForgedSequence> forged);

// Forges round(ratio * N) sessions, N the number of bona fide sessions in
// `train`, and returns `train` plus the forgeries labeled assisted. Texts come
// from the assisted training sessions in turn (their bona fide source text
// when none exist). At-U forges each with its source user's timings.
std::vector<Session> adversarial_augment(std::span<const Session> train,
                                         const TimingDictionary& dict, const AttackConfig& cfg,
                                         double ratio);

// Text typed in a session: the stored text, else reconstructed from events.
std::string session_text(const Session& s);

}  // namespace kstroke

#endif  // KSTROKE_DECEPTION_HPP_
