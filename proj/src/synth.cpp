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

#include "kstroke/synth.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kstroke/errors.hpp"
#include "kstroke/features.hpp"
#include "kstroke/keymap.hpp"

namespace kstroke {
namespace {

constexpr double kMinTime = 10.0;  // ms, floor for simulated dwells and intervals
constexpr double kLongPause = 2000.0;
constexpr double kMaxHesitation = 1900.0;

double positive_normal(Rng& rng, double mu, double sigma) {
  return std::max(kMinTime, rng.normal(mu, sigma));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <typename Fn>
void for_each_field(TypistProfile& p, Fn&& fn) {
  fn("dwell_mu", p.dwell_mu);
  fn("dwell_sigma", p.dwell_sigma);
  fn("interval_mu", p.interval_mu);
  fn("interval_sigma", p.interval_sigma);
  fn("pause_rate", p.pause_rate);
  fn("pause_scale", p.pause_scale);
  fn("revision_rate", p.revision_rate);
  fn("hesitation_rate", p.hesitation_rate);
  fn("hesitation_scale", p.hesitation_scale);
  fn("key_spread", p.key_spread);
}

}  // namespace

void TypistProfile::validate() const {
  TypistProfile copy = *this;
  for_each_field(copy, [](const char* name, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("profile field ") + name + " must be non-negative");
    }
  });
  if (dwell_sigma > dwell_mu || interval_sigma > interval_mu) {
    throw ConfigError("profile sigma must not exceed its mean");
  }
  if (pause_rate > 100.0 || revision_rate > 100.0 || hesitation_rate > 100.0) {
    throw ConfigError("profile rates are per 100 keys and must not exceed 100");
  }
}

RegimeSpec RegimeSpec::defaults(Mode mode) {
  RegimeSpec r;
  r.mode = mode;
  switch (mode) {
    case Mode::BonaFide:
    case Mode::Free:
      break;
    case Mode::Transcribed:
    case Mode::Fixed:
      r.pause_mult = 0.15;
      r.revision_mult = 0.2;
      r.hesitation_mult = 0.4;
      r.dwell_sigma_mult = 0.5;
      r.interval_mu_mult = 0.85;
      r.interval_sigma_mult = 0.5;
      break;
    case Mode::Paraphrased:
      r.pause_mult = 0.5;
      r.revision_mult = 0.55;
      r.hesitation_mult = 0.7;
      r.dwell_sigma_mult = 0.75;
      r.interval_mu_mult = 0.92;
      r.interval_sigma_mult = 0.75;
      break;
  }
  return r;
}

TypistProfile RegimeSpec::apply(const TypistProfile& p) const {
  TypistProfile q = p;
  q.pause_rate *= pause_mult;
  q.revision_rate *= revision_mult;
  q.hesitation_rate *= hesitation_mult;
  q.dwell_mu *= dwell_mu_mult;
  q.dwell_sigma *= dwell_sigma_mult;
  q.interval_mu *= interval_mu_mult;
  q.interval_sigma *= interval_sigma_mult;
  return q;
}

PopulationPrior PopulationPrior::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prior config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("prior config must be a JSON object");
  PopulationPrior prior;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) throw ConfigError("prior field '" + it.key() + "' must be a number");
    const double v = it.value().get<double>();
    if (it.key() == "spread") {
      prior.spread = v;
      continue;
    }
    bool found = false;
    for_each_field(prior.mean, [&](const char* name, double& field) {
      if (it.key() == name) {
        field = v;
        found = true;
      }
    });
    if (!found) throw ConfigError("unknown prior field '" + it.key() + "'");
  }
  if (prior.spread < 0.0) throw ConfigError("prior spread must be non-negative");
  prior.mean.validate();
  return prior;
}

PopulationPrior PopulationPrior::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prior config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

TypistProfile PopulationPrior::draw(Rng& rng) const {
  TypistProfile p = mean;
  for_each_field(p, [&](const char* name, double& v) {
    if (std::string_view(name) == "key_spread") return;
    v *= std::exp(spread * rng.normal(0.0, 1.0));
  });
  p.dwell_sigma = std::min(p.dwell_sigma, p.dwell_mu);
  p.interval_sigma = std::min(p.interval_sigma, p.interval_mu);
  p.pause_rate = std::min(p.pause_rate, 100.0);
  p.revision_rate = std::min(p.revision_rate, 100.0);
  p.hesitation_rate = std::min(p.hesitation_rate, 100.0);
  return p;
}

KeyFactors KeyFactors::draw(double spread, Rng& rng) {
  KeyFactors f;
  f.dwell.resize(256);
  f.interval.resize(256);
  for (std::size_t k = 0; k < 256; ++k) {
    f.dwell[k] = std::clamp(1.0 + spread * rng.normal(0.0, 1.0), 0.5, 1.5);
    f.interval[k] = std::clamp(1.0 + spread * rng.normal(0.0, 1.0), 0.5, 1.5);
  }
  return f;
}

KeyFactors KeyFactors::flat() {
  KeyFactors f;
  f.dwell.assign(256, 1.0);
  f.interval.assign(256, 1.0);
  return f;
}

std::vector<KeyEvent> simulate_typing(std::string_view text, const TypistProfile& p,
                                      const KeyFactors& factors, Rng& rng) {
  struct Stroke {
    int keycode;
    bool shift;
  };
  std::vector<Stroke> plan;
  plan.reserve(text.size() + text.size() / 8);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto ks = keymap::from_char(text[i]);
    if (!ks) throw ConfigError("simulated text contains an untypable character");
    if (i > 0 && rng.bernoulli(p.revision_rate / 100.0)) {
      int wrong = 65 + static_cast<int>(rng.index(25));
      if (wrong >= ks->keycode && keymap::is_letter(ks->keycode)) ++wrong;
      plan.push_back({wrong, false});
      plan.push_back({keymap::kBackspace, false});
    }
    plan.push_back({ks->keycode, ks->shift});
  }

  std::vector<KeyEvent> events;
  events.reserve(plan.size() * 2 + text.size() / 4);
  std::array<double, 256> last_up;
  last_up.fill(-1.0);
  double prev_down = 0.0, floor_t = 0.0;
  bool first = true;

  auto gap_before = [&](int key) {
    double gap = positive_normal(rng, p.interval_mu * factors.interval[static_cast<std::size_t>(key)],
                                 p.interval_sigma);
    if (rng.bernoulli(p.pause_rate / 100.0)) gap += kLongPause + rng.exponential(p.pause_scale);
    if (rng.bernoulli(p.hesitation_rate / 100.0)) {
      gap += std::min(kMaxHesitation, rng.exponential(p.hesitation_scale));
    }
    return gap;
  };
  auto dwell_of = [&](int key) {
    return positive_normal(rng, p.dwell_mu * factors.dwell[static_cast<std::size_t>(key)],
                           p.dwell_sigma);
  };
  auto press = [&](int key, double down) {
    down = std::max(down, last_up[static_cast<std::size_t>(key)] + 1.0);
    const double up = down + dwell_of(key);
    events.push_back({KeyAction::Down, key, down});
    events.push_back({KeyAction::Up, key, up});
    last_up[static_cast<std::size_t>(key)] = up;
    return std::pair{down, up};
  };

  for (const Stroke& s : plan) {
    double t = first ? 0.0 : std::max(prev_down + gap_before(s.keycode), floor_t);
    first = false;
    if (s.shift) {
      const double shift_down = std::max(t, last_up[keymap::kShift] + 1.0);
      events.push_back({KeyAction::Down, keymap::kShift, shift_down});
      const double lag = positive_normal(rng, 0.4 * p.interval_mu, 0.4 * p.interval_sigma);
      const auto [kd, ku] = press(s.keycode, shift_down + lag);
      const double shift_up = ku + std::max(1.0, 0.3 * p.dwell_mu);
      events.push_back({KeyAction::Up, keymap::kShift, shift_up});
      last_up[keymap::kShift] = shift_up;
      prev_down = kd;
      floor_t = shift_up + 1.0;
    } else {
      const auto [kd, ku] = press(s.keycode, t);
      (void)ku;
      prev_down = kd;
      floor_t = kd;
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const KeyEvent& a, const KeyEvent& b) { return a.timestamp < b.timestamp; });
  return events;
}

std::string random_text(std::span<const std::string> words, std::size_t min_chars, Rng& rng) {
  if (words.empty()) throw ConfigError("word list is empty");
  std::string out;
  while (out.size() < min_chars) {
    if (!out.empty()) out.push_back(' ');
    const std::size_t n_words = 6 + rng.index(9);
    for (std::size_t w = 0; w < n_words; ++w) {
      std::string word = words[rng.index(words.size())];
      if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      out += word;
      if (w + 1 < n_words) out += rng.bernoulli(0.08) ? ", " : " ";
    }
    out.push_back('.');
  }
  return out;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open word list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    bool ok = true;
    for (char c : line) ok = ok && keymap::from_char(c).has_value();
    if (ok) words.push_back(lower(line));
  }
  if (words.empty()) throw ConfigError("word list " + path.string() + " has no usable words");
  return words;
}

std::vector<Session> generate_corpus(std::size_t n_users, std::size_t sessions_per_user,
                                     std::size_t chars_per_session,
                                     std::span<const RegimeSpec> regimes, std::uint64_t seed,
                                     const CorpusOptions& options) {
  if (chars_per_session < 300) throw ConfigError("chars_per_session must be at least 300");
  if (regimes.empty()) throw ConfigError("at least one regime is required");
  if (options.keyboards.empty() || options.contexts.empty()) {
    throw ConfigError("keyboard and context tag lists must be non-empty");
  }
  const std::vector<std::string> words = load_word_list(
      options.word_list.empty() ? LexiconSet::default_dir() / "dictionary.txt" : options.word_list);

  const int width = std::max<int>(3, static_cast<int>(std::to_string(n_users).size()));
  std::vector<Session> corpus;
  corpus.reserve(n_users * sessions_per_user * regimes.size());
  for (std::size_t u = 0; u < n_users; ++u) {
    const std::uint64_t user_seed = derive_seed(seed, u);
    Rng user_rng(user_seed);
    TypistProfile base = options.prior.draw(user_rng);
    base.dwell_mu *= options.dataset_dwell_mult;
    base.dwell_sigma *= options.dataset_dwell_mult;
    base.interval_mu *= options.dataset_interval_mult;
    base.interval_sigma *= options.dataset_interval_mult;
    const KeyFactors factors = KeyFactors::draw(base.key_spread, user_rng);

    std::string uid = std::to_string(u);
    uid = options.user_prefix + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(uid.size(), width), '0') + uid;

    for (std::size_t r = 0; r < regimes.size(); ++r) {
      const TypistProfile profile = regimes[r].apply(base);
      for (std::size_t k = 0; k < sessions_per_user; ++k) {
        Rng rng(derive_seed(user_seed, 1 + r * 100003 + k));
        Session s;
        s.user_id = uid;
        s.session_id = lower(to_string(regimes[r].mode)) + "-" + std::to_string(k);
        s.mode = regimes[r].mode;
        s.dataset = options.dataset;
        s.keyboard = options.keyboards[u % options.keyboards.size()];
        s.context = options.contexts[(r * sessions_per_user + k) % options.contexts.size()];
        s.text = random_text(words, chars_per_session, rng);
        s.events = simulate_typing(*s.text, profile, factors, rng);
        corpus.push_back(std::move(s));
      }
    }
  }
  return corpus;
}

}  // namespace kstroke
