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

// Independent reference implementations and fixture helpers shared by the
// unit tests and the acceptance binary. Deliberately naive.

#ifndef KSTROKE_TESTS_ORACLES_HPP_
#define KSTROKE_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kstroke/eval.hpp"
#include "kstroke/features.hpp"
#include "kstroke/logmodel.hpp"

namespace kstroke::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(KSTROKE_FIXTURE_DIR) / name;
}

inline nlohmann::json load_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

inline KeyEvent down(int key, double t) { return {KeyAction::Down, key, t}; }
inline KeyEvent up(int key, double t) { return {KeyAction::Up, key, t}; }

inline Session make_session(std::vector<KeyEvent> events, Mode mode = Mode::BonaFide,
                            std::string user = "u", std::string id = "s") {
  Session s;
  s.user_id = std::move(user);
  s.session_id = std::move(id);
  s.mode = mode;
  s.dataset = "test";
  s.events = std::move(events);
  return s;
}

// Non-overlapping strokes: each key held `dwell` ms, presses `gap` ms apart.
inline std::vector<KeyEvent> strokes(const std::vector<int>& keys, double dwell = 80,
                                     double gap = 150, double start = 0) {
  std::vector<KeyEvent> ev;
  double t = start;
  for (int k : keys) {
    ev.push_back(down(k, t));
    ev.push_back(up(k, t + dwell));
    t += gap;
  }
  return ev;
}

// Lexicon written out in the timing oracle file.
inline LexiconSet fixture_lexicon(const nlohmann::json& oracle) {
  LexiconSet lex;
  for (const auto& w : oracle["lexicon"]["dictionary"]) lex.dictionary.insert(w.get<std::string>());
  for (const auto& w : oracle["lexicon"]["function_words"]) {
    lex.function_words.insert(w.get<std::string>());
  }
  return lex;
}

// EER by sweeping every candidate threshold with a full rescan: below the
// lowest score, each midpoint between distinct adjacent scores, above the
// highest. Smallest |FAR - FRR|, then smallest FAR + FRR, then lowest
// threshold.
struct BruteEer {
  double eer, threshold, far, frr;
};

inline BruteEer brute_force_eer(std::span<const ScoredLabel> scores) {
  std::set<double> distinct;
  for (const auto& s : scores) distinct.insert(s.score);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> candidates = {-inf};
  for (auto it = distinct.begin(); std::next(it) != distinct.end(); ++it) {
    candidates.push_back((*it + *std::next(it)) / 2.0);
  }
  candidates.push_back(inf);

  BruteEer best{0, 0, 0, 0};
  double best_gap = inf, best_sum = inf;
  for (double t : candidates) {
    double pos = 0, neg = 0, missed = 0, false_alarm = 0;
    for (const auto& s : scores) {
      if (s.positive) {
        ++pos;
        if (s.score < t) ++missed;
      } else {
        ++neg;
        if (s.score >= t) ++false_alarm;
      }
    }
    const double far = missed / pos, frr = false_alarm / neg;
    const double gap = std::fabs(far - frr), sum = far + frr;
    if (gap < best_gap || (gap == best_gap && sum < best_sum)) {
      best_gap = gap;
      best_sum = sum;
      best = {sum / 2.0, t, far, frr};
    }
  }
  return best;
}

// Window (start, length) pairs by scanning every index: a start must be a
// multiple of the stride; full windows fit entirely; the first start that
// does not fit yields a tail when it keeps at least `tail_fraction` * W
// events.
inline std::vector<std::pair<std::size_t, std::size_t>> enumerate_windows(
    std::size_t n, std::size_t w, std::size_t v, double tail_fraction) {
  const std::size_t s = w - v;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % s != 0) continue;
    if (i + w <= n) {
      out.emplace_back(i, w);
    } else {
      if (static_cast<double>(n - i) >= tail_fraction * static_cast<double>(w)) {
        out.emplace_back(i, n - i);
      }
      break;
    }
  }
  return out;
}

// floor((N - W) / S) + 1 full windows (none when N < W), plus one tail.
inline std::size_t window_count_formula(std::size_t n, std::size_t w, std::size_t v,
                                        double tail_fraction) {
  const std::size_t s = w - v;
  const std::size_t full = n >= w ? (n - w) / s + 1 : 0;
  const std::size_t rest = n - full * s;
  const bool tail =
      rest > 0 && static_cast<double>(rest) >= tail_fraction * static_cast<double>(w);
  return full + (tail ? 1 : 0);
}

// Confusion-table definitions written out directly: positives are assisted.
struct MetricOracle {
  double far, frr, precision, recall, f1, accuracy;
};

inline MetricOracle metric_oracle(std::size_t tp, std::size_t fp, std::size_t tn,
                                  std::size_t fn) {
  auto div = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
  MetricOracle m{};
  m.far = div(fn, fn + tp);
  m.frr = div(fp, fp + tn);
  m.precision = div(tp, tp + fp);
  m.recall = div(tp, tp + fn);
  m.f1 = div(2.0 * tp, 2.0 * tp + fp + fn);  // = 2PR / (P + R)
  m.accuracy = div(tp + tn, tp + fp + tn + fn);
  return m;
}

}  // namespace kstroke::testing

#endif  // KSTROKE_TESTS_ORACLES_HPP_
