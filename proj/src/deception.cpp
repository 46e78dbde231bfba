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

#include "kstroke/deception.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <set>

#include "kstroke/errors.hpp"
#include "kstroke/keymap.hpp"
#include "kstroke/random.hpp"

namespace kstroke {
namespace {

struct Observations {
  std::map<int, std::vector<double>> kht;
  std::map<Digraph, std::vector<double>> kit;

  void add(const TimingObs& o) {
    for (const auto& [k, v] : o.kht) kht[k].insert(kht[k].end(), v.begin(), v.end());
    for (const auto& [k, v] : o.kit) kit[k].insert(kit[k].end(), v.begin(), v.end());
  }

  TimingTable table() const {
    TimingTable t;
    for (const auto& [k, v] : kht) t.kht[k] = TimingStat::of(v);
    for (const auto& [k, v] : kit) t.kit[k] = TimingStat::of(v);
    return t;
  }
};

struct Stroke {
  int keycode;
  bool shift;
};

class Sampler {
 public:
  Sampler(const TimingDictionary& dict, const TimingTable* user, const AttackConfig& cfg,
          Rng& rng)
      : dict_(dict), user_(user), cfg_(cfg), rng_(rng) {}

  double dwell(int key) {
    return draw(find(user_ ? &user_->kht : nullptr, key), find(&dict_.pooled.kht, key),
                dict_.global_kht);
  }

  double interval(int a, int b) {
    const Digraph d{a, b};
    return draw(find(user_ ? &user_->kit : nullptr, d), find(&dict_.pooled.kit, d),
                dict_.global_kit);
  }

 private:
  template <typename Map, typename Key>
  static const TimingStat* find(const Map* m, const Key& k) {
    if (!m) return nullptr;
    auto it = m->find(k);
    return it == m->end() ? nullptr : &it->second;
  }

  double draw(const TimingStat* user, const TimingStat* pooled, const TimingStat& global) {
    const TimingStat* s = user ? user : pooled;
    if (!s) {
      const double w = cfg_.smoothing_width * global.sd;
      const double x = global.mean + (w > 0.0 ? rng_.uniform(-w, w) : 0.0);
      return std::max(x, cfg_.min_sample);
    }
    const double sd = std::max(s->sd, cfg_.sigma_floor);
    for (int attempt = 0; attempt < cfg_.max_resample; ++attempt) {
      const double x = sd > 0.0 ? rng_.normal(s->mean, sd) : s->mean;
      if (x >= cfg_.min_sample) return x;
    }
    return cfg_.min_sample;
  }

  const TimingDictionary& dict_;
  const TimingTable* user_;
  const AttackConfig& cfg_;
  Rng& rng_;
};

}  // namespace

TimingStat TimingStat::of(std::span<const double> xs) {
  TimingStat s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

TimingDictionary build_dictionary(std::span<const Session> sessions, KitVariant variant) {
  TimingDictionary dict;
  dict.variant = variant;
  std::map<std::string, Observations> per_user;
  Observations pooled;
  for (const Session& s : sessions) {
    if (s.label().is_assisted) continue;
    const TimingObs o = extract_timing(s.events, variant);
    per_user[s.user_id].add(o);
    pooled.add(o);
  }
  if (pooled.kht.empty()) throw ForgeError("timing dictionary needs bona fide keystrokes");
  for (const auto& [user, obs] : per_user) {
    if (!obs.kht.empty()) dict.per_user[user] = obs.table();
  }
  dict.pooled = pooled.table();
  std::vector<double> all_kht, all_kit;
  for (const auto& [_, v] : pooled.kht) all_kht.insert(all_kht.end(), v.begin(), v.end());
  for (const auto& [_, v] : pooled.kit) all_kit.insert(all_kit.end(), v.begin(), v.end());
  dict.global_kht = TimingStat::of(all_kht);
  dict.global_kit = all_kit.empty() ? dict.global_kht : TimingStat::of(all_kit);
  return dict;
}

std::string_view to_string(AttackMode m) { return m == AttackMode::AtU ? "at-u" : "at-p"; }

AttackMode parse_attack_mode(std::string_view text) {
  std::string t;
  for (char c : text) {
    if (c != '-' && c != '_') t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (t == "atu") return AttackMode::AtU;
  if (t == "atp") return AttackMode::AtP;
  throw ConfigError("unknown attack mode '" + std::string(text) + "' (expected at-u or at-p)");
}

void AttackConfig::validate() const {
  if (!(backspace_prob >= 0.0 && backspace_prob <= 1.0)) {
    throw ConfigError("backspace_prob must lie in [0, 1]");
  }
  if (backspace_gap == 0) throw ConfigError("backspace_gap must be positive");
  if (sigma_floor < 0.0 || smoothing_width < 0.0) {
    throw ConfigError("sigma_floor and smoothing_width must be non-negative");
  }
  if (max_resample < 1) throw ConfigError("max_resample must be at least 1");
}

ForgedSequence forge(std::string_view text, const TimingDictionary& dict,
                     const std::optional<std::string>& user, const AttackConfig& cfg) {
  cfg.validate();
  std::set<char> missing;
  std::vector<Stroke> chars;
  chars.reserve(text.size());
  for (char c : text) {
    if (auto ks = keymap::from_char(c)) {
      chars.push_back({ks->keycode, ks->shift});
    } else {
      missing.insert(c);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (char c : missing) {
      if (!list.empty()) list += ", ";
      if (std::isprint(static_cast<unsigned char>(c))) {
        list += "'" + std::string(1, c) + "'";
      } else {
        list += "0x" + std::to_string(static_cast<unsigned>(static_cast<unsigned char>(c)));
      }
    }
    throw ForgeError("text contains characters without a key: " + list);
  }

  const TimingTable* user_table = nullptr;
  if (cfg.mode == AttackMode::AtU) {
    if (!user) throw ForgeError("At-U forgery needs a source user");
    auto it = dict.per_user.find(*user);
    if (it == dict.per_user.end()) throw ForgeError("user '" + *user + "' not in dictionary");
    user_table = &it->second;
  }

  Rng rng(cfg.seed);
  ForgedSequence out;
  out.text = std::string(text);

  // Stroke plan with injected wrong-key + Backspace episodes.
  std::vector<Stroke> plan;
  plan.reserve(chars.size() * 2);
  std::size_t run = 0;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (run >= cfg.backspace_gap) {
      ++out.backspace_opportunities;
      run = 0;
      if (rng.bernoulli(cfg.backspace_prob)) {
        ++out.backspace_episodes;
        int wrong = 65 + static_cast<int>(rng.index(25));
        if (wrong >= chars[i].keycode && keymap::is_letter(chars[i].keycode)) ++wrong;
        plan.push_back({wrong, false});
        plan.push_back({keymap::kBackspace, false});
      }
    }
    plan.push_back(chars[i]);
    ++run;
  }

  Sampler sampler(dict, user_table, cfg, rng);
  std::array<double, 256> last_up;
  last_up.fill(-1.0);
  int prev_key = -1;
  double prev_down = 0.0, prev_up = 0.0, floor_t = 0.0;
  auto press = [&](int key, double down) {
    down = std::max(down, last_up[static_cast<std::size_t>(key)] + 1.0);
    const double up = down + sampler.dwell(key);
    out.events.push_back({KeyAction::Down, key, down});
    out.events.push_back({KeyAction::Up, key, up});
    last_up[static_cast<std::size_t>(key)] = up;
    return std::pair{down, up};
  };
  auto next_down = [&](int key) {
    if (prev_key < 0) return 0.0;
    const double base = dict.variant == KitVariant::PressPress ? prev_down : prev_up;
    return std::max(base + sampler.interval(prev_key, key), floor_t);
  };

  for (const Stroke& s : plan) {
    if (s.shift) {
      const double sd =
          std::max(next_down(keymap::kShift), last_up[keymap::kShift] + 1.0);
      const double shift_dwell = sampler.dwell(keymap::kShift);
      out.events.push_back({KeyAction::Down, keymap::kShift, sd});
      prev_key = keymap::kShift;
      prev_down = sd;
      prev_up = sd + shift_dwell;
      floor_t = sd;
      const auto [kd, ku] = press(s.keycode, next_down(s.keycode));
      const double shift_up = std::max(sd + shift_dwell, ku + 1.0);
      out.events.push_back({KeyAction::Up, keymap::kShift, shift_up});
      last_up[keymap::kShift] = shift_up;
      prev_key = s.keycode;
      prev_down = kd;
      prev_up = ku;
      floor_t = shift_up + 1.0;
    } else {
      const auto [kd, ku] = press(s.keycode, next_down(s.keycode));
      prev_key = s.keycode;
      prev_down = kd;
      prev_up = ku;
      floor_t = kd;
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const KeyEvent& a, const KeyEvent& b) { return a.timestamp < b.timestamp; });

  out.provenance["forged"] = std::string(to_string(cfg.mode));
  out.provenance["seed"] = std::to_string(cfg.seed);
  if (user) out.provenance["source_user"] = *user;
  return out;
}

Session to_session(const ForgedSequence& f, std::string user_id, std::string session_id,
                   std::string dataset) {
  Session s;
  s.user_id = std::move(user_id);
  s.session_id = std::move(session_id);
  s.mode = Mode::Paraphrased;
  s.dataset = std::move(dataset);
  s.events = f.events;
  s.text = f.text;
  s.provenance = f.provenance;
  return s;
}

double attack_success_rate(const Detector& detector, std::span<const Session> forged) {
  if (forged.empty()) return 0.0;
  std::size_t accepted = 0;
  for (const Session& s : forged) accepted += detector.flags(s) ? 0 : 1;
  return static_cast<double>(accepted) / static_cast<double>(forged.size());
}

double attack_eval(const Detector& detector, std::span<const ForgedSequence> forged) {
  std::vector<Session> sessions;
  sessions.reserve(forged.size());
  for (std::size_t i = 0; i < forged.size(); ++i) {
    sessions.push_back(to_session(forged[i], "forger", "f" + std::to_string(i), "forged"));
  }
  return attack_success_rate(detector, sessions);
}

std::string session_text(const Session& s) {
  return s.text ? *s.text : reconstruct_text(s.events);
}

std::vector<Session> adversarial_augment(std::span<const Session> train,
                                         const TimingDictionary& dict, const AttackConfig& cfg,
                                         double ratio) {
  if (!(ratio >= 0.0)) throw ConfigError("augmentation ratio must be non-negative");
  std::vector<Session> out(train.begin(), train.end());
  std::vector<const Session*> bona, assisted;
  for (const Session& s : train) (s.label().is_assisted ? assisted : bona).push_back(&s);
  const auto n_forged =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(bona.size())));
  if (n_forged == 0) return out;

  for (std::size_t i = 0; i < n_forged; ++i) {
    const Session& src = *bona[i % bona.size()];
    const std::string text =
        assisted.empty() ? session_text(src) : session_text(*assisted[i % assisted.size()]);
    AttackConfig item = cfg;
    item.seed = derive_seed(cfg.seed, i);
    std::optional<std::string> user;
    if (cfg.mode == AttackMode::AtU) user = src.user_id;
    ForgedSequence f = forge(text, dict, user, item);
    Session s = to_session(f, src.user_id, "forged-" + std::to_string(i), src.dataset);
    s.context = src.context;
    s.keyboard = src.keyboard;
    s.provenance["source_session"] = src.key();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace kstroke
