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

#include "kstroke/eval.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "kstroke/errors.hpp"
#include "kstroke/random.hpp"

namespace kstroke {
namespace {

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string normalize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

constexpr std::array<ScenarioFamily, 8> kFamilies = {
    ScenarioFamily::UserSpecific,     ScenarioFamily::UserAgnostic,
    ScenarioFamily::KeyboardSpecific, ScenarioFamily::KeyboardAgnostic,
    ScenarioFamily::ContextSpecific,  ScenarioFamily::ContextAgnostic,
    ScenarioFamily::DatasetSpecific,  ScenarioFamily::DatasetAgnostic,
};

// Number of training items out of n, leaving at least one for testing.
std::size_t train_count(std::size_t n, double fraction) {
  if (n < 2) return n;
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

}  // namespace

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  m.counts = c;
  bool deg = false;
  m.precision = ratio(c.tp, c.tp + c.fp, deg);
  m.recall = ratio(c.tp, c.tp + c.fn, deg);
  m.far = ratio(c.fn, c.fn + c.tp, deg);
  m.frr = ratio(c.fp, c.fp + c.tn, deg);
  m.accuracy = ratio(c.tp + c.tn, c.total(), deg);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, deg);
  m.degenerate = deg;
  return m;
}

ConfusionCounts confusion(std::span<const ScoredLabel> scores, double threshold) {
  ConfusionCounts c;
  for (const ScoredLabel& s : scores) {
    const bool flagged = s.score >= threshold;
    if (s.positive) {
      flagged ? ++c.tp : ++c.fn;
    } else {
      flagged ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

EerResult roc_eer(std::span<const ScoredLabel> scores) {
  std::size_t n_pos = 0;
  for (const ScoredLabel& s : scores) n_pos += s.positive ? 1 : 0;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("EER needs both classes");

  std::vector<ScoredLabel> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score < b.score; });

  const double inf = std::numeric_limits<double>::infinity();
  EerResult best;
  double best_gap = inf, best_sum = inf;
  auto consider = [&](double threshold, std::size_t pos_below, std::size_t neg_below) {
    const double far = static_cast<double>(pos_below) / static_cast<double>(n_pos);
    const double frr = static_cast<double>(n_neg - neg_below) / static_cast<double>(n_neg);
    const double gap = std::abs(far - frr);
    const double sum = far + frr;
    if (gap < best_gap || (gap == best_gap && sum < best_sum)) {
      best_gap = gap;
      best_sum = sum;
      best = {sum / 2.0, threshold, far, frr};
    }
  };

  // Candidates ascend, so strict improvement keeps the lowest threshold.
  consider(-inf, 0, 0);
  std::size_t pos_below = 0, neg_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].positive ? pos_below : neg_below) += 1;
      ++j;
    }
    if (j < sorted.size()) {
      consider((sorted[i].score + sorted[j].score) / 2.0, pos_below, neg_below);
    }
    i = j;
  }
  consider(inf, n_pos, n_neg);
  return best;
}

std::string_view to_string(ScenarioFamily f) {
  switch (f) {
    case ScenarioFamily::UserSpecific: return "user-specific";
    case ScenarioFamily::UserAgnostic: return "user-agnostic";
    case ScenarioFamily::KeyboardSpecific: return "keyboard-specific";
    case ScenarioFamily::KeyboardAgnostic: return "keyboard-agnostic";
    case ScenarioFamily::ContextSpecific: return "context-specific";
    case ScenarioFamily::ContextAgnostic: return "context-agnostic";
    case ScenarioFamily::DatasetSpecific: return "dataset-specific";
    case ScenarioFamily::DatasetAgnostic: return "dataset-agnostic";
  }
  return "user-specific";
}

ScenarioFamily parse_scenario(std::string_view text) {
  const std::string want = normalize_name(text);
  for (ScenarioFamily f : kFamilies) {
    if (normalize_name(to_string(f)) == want) return f;
  }
  throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

bool is_agnostic(ScenarioFamily f) {
  switch (f) {
    case ScenarioFamily::UserAgnostic:
    case ScenarioFamily::KeyboardAgnostic:
    case ScenarioFamily::ContextAgnostic:
    case ScenarioFamily::DatasetAgnostic:
      return true;
    default:
      return false;
  }
}

std::optional<std::string> group_of(const Session& s, ScenarioFamily family) {
  switch (family) {
    case ScenarioFamily::UserSpecific:
    case ScenarioFamily::UserAgnostic:
      return s.dataset + "/" + s.user_id;
    case ScenarioFamily::KeyboardSpecific:
    case ScenarioFamily::KeyboardAgnostic:
      return s.keyboard;
    case ScenarioFamily::ContextSpecific:
    case ScenarioFamily::ContextAgnostic:
      return s.context;
    case ScenarioFamily::DatasetSpecific:
    case ScenarioFamily::DatasetAgnostic:
      return s.dataset;
  }
  return std::nullopt;
}

SplitManifest make_split(std::span<const Session> sessions, const ScenarioSpec& spec) {
  if (!(spec.split_fraction > 0.0 && spec.split_fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1)");
  }
  SplitManifest manifest;
  manifest.family = spec.family;
  const std::string family_name(to_string(spec.family));

  // Group sessions, preserving input order within each group.
  std::map<std::string, std::vector<const Session*>> groups;
  for (const Session& s : sessions) {
    if (auto g = group_of(s, spec.family)) groups[*g].push_back(&s);
  }
  if (groups.empty()) throw SplitError(family_name + ": no session carries the grouping key");

  Rng rng(spec.seed);

  if (!is_agnostic(spec.family)) {
    for (auto& [name, members] : groups) {
      std::vector<const Session*> pos, neg;
      for (const Session* s : members) (s->label().is_assisted ? pos : neg).push_back(s);
      if (pos.size() < 2 || neg.size() < 2) continue;
      Fingerprint name_fp;
      name_fp.update(name);
      Rng group_rng(derive_seed(spec.seed, name_fp.value()));
      GroupSplit gs;
      gs.group = name;
      for (auto* cls : {&neg, &pos}) {
        group_rng.shuffle(cls->begin(), cls->end());
        const std::size_t k = train_count(cls->size(), spec.split_fraction);
        for (std::size_t i = 0; i < cls->size(); ++i) {
          (i < k ? gs.train : gs.test).push_back((*cls)[i]->key());
        }
      }
      std::sort(gs.train.begin(), gs.train.end());
      std::sort(gs.test.begin(), gs.test.end());
      manifest.train.insert(manifest.train.end(), gs.train.begin(), gs.train.end());
      manifest.test.insert(manifest.test.end(), gs.test.begin(), gs.test.end());
      manifest.train_group_keys.push_back(name);
      manifest.test_group_keys.push_back(name);
      manifest.groups.push_back(std::move(gs));
    }
    if (manifest.groups.empty()) {
      throw SplitError(family_name + ": no group has two sessions of each class");
    }
    return manifest;
  }

  std::vector<std::string> names;
  for (const auto& [name, _] : groups) names.push_back(name);
  if (names.size() < 2) {
    throw SplitError(family_name + ": needs at least two groups, found " +
                     std::to_string(names.size()));
  }

  std::set<std::string> test_groups, train_groups;
  if (spec.family == ScenarioFamily::UserAgnostic) {
    std::vector<std::string> shuffled = names;
    rng.shuffle(shuffled.begin(), shuffled.end());
    const std::size_t k = train_count(shuffled.size(), spec.split_fraction);
    train_groups.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
    test_groups.insert(shuffled.begin() + static_cast<std::ptrdiff_t>(k), shuffled.end());
  } else {
    if (spec.holdout.empty()) {
      test_groups.insert(names.back());
    } else {
      for (const std::string& h : spec.holdout) {
        if (!groups.contains(h)) throw SplitError(family_name + ": unknown holdout group '" + h + "'");
        test_groups.insert(h);
      }
    }
    if (!spec.train_groups.empty()) {
      for (const std::string& t : spec.train_groups) {
        if (!groups.contains(t)) throw SplitError(family_name + ": unknown training group '" + t + "'");
        if (test_groups.contains(t)) {
          throw SplitError(family_name + ": group '" + t + "' is both train and test");
        }
        train_groups.insert(t);
      }
    } else {
      for (const std::string& n : names) {
        if (!test_groups.contains(n)) train_groups.insert(n);
      }
    }
    if (train_groups.empty()) throw SplitError(family_name + ": no training groups remain");
  }

  for (const std::string& g : train_groups) {
    for (const Session* s : groups[g]) manifest.train.push_back(s->key());
  }
  for (const std::string& g : test_groups) {
    for (const Session* s : groups[g]) manifest.test.push_back(s->key());
  }
  manifest.train_group_keys.assign(train_groups.begin(), train_groups.end());
  manifest.test_group_keys.assign(test_groups.begin(), test_groups.end());
  return manifest;
}

}  // namespace kstroke
