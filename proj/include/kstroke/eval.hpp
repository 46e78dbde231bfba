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

// Detection metrics and evaluation splits.
//
// Assisted writing is the positive class. FAR is the share of assisted
// samples accepted as bona fide (fn / (fn + tp)); FRR is the share of bona
// fide samples flagged as assisted (fp / (fp + tn)). A sample is flagged when
// its score is >= the threshold.

#ifndef KSTROKE_EVAL_HPP_
#define KSTROKE_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kstroke/logmodel.hpp"

namespace kstroke {

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  // Same predictions with the positive and negative classes exchanged.
  ConfusionCounts swapped() const { return {tn, fn, tp, fp}; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Metrics {
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double accuracy = 0.0;
  bool degenerate = false;  // some denominator was zero; that metric is 0
};

Metrics metrics_from_counts(const ConfusionCounts& c);
ConfusionCounts confusion(std::span<const ScoredLabel> scores, double threshold);
inline Metrics metrics(std::span<const ScoredLabel> scores, double threshold) {
  return metrics_from_counts(confusion(scores, threshold));
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

// Sweeps -inf, the midpoints of consecutive distinct scores, and +inf. Picks
// the smallest |FAR - FRR|, then the smallest FAR + FRR, then the lowest
// threshold; eer is (FAR + FRR) / 2 at that point. Throws ConfigError unless
// both classes are present.
EerResult roc_eer(std::span<const ScoredLabel> scores);

enum class ScenarioFamily {
  UserSpecific,
  UserAgnostic,
  KeyboardSpecific,
  KeyboardAgnostic,
  ContextSpecific,
  ContextAgnostic,
  DatasetSpecific,
  DatasetAgnostic,
};

std::string_view to_string(ScenarioFamily f);
// Accepts "user-agnostic", "UserAgnostic", etc.
ScenarioFamily parse_scenario(std::string_view text);
bool is_agnostic(ScenarioFamily f);

struct ScenarioSpec {
  ScenarioFamily family = ScenarioFamily::UserSpecific;
  // Agnostic families: group tags reserved for testing (keyboard/context/
  // dataset). Empty picks the last tag in sorted order.
  std::vector<std::string> holdout;
  // DatasetAgnostic only: training datasets; empty means all non-holdout.
  std::vector<std::string> train_groups;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  // Specific families: train and report per group (macro average) or pooled.
  bool per_group = true;
};

// Grouping key of a session under the family, if it has one.
std::optional<std::string> group_of(const Session& s, ScenarioFamily family);

struct GroupSplit {
  std::string group;
  std::vector<std::string> train;  // session keys
  std::vector<std::string> test;
};

struct SplitManifest {
  ScenarioFamily family = ScenarioFamily::UserSpecific;
  std::vector<std::string> train;  // session keys, union over groups
  std::vector<std::string> test;
  std::vector<GroupSplit> groups;  // specific families only
  std::vector<std::string> train_group_keys;
  std::vector<std::string> test_group_keys;
};

// Specific families split sessions 80/20 within each group, stratified by
// label; agnostic families keep the grouping key disjoint between train and
// test. Reproducible from spec.seed. Throws SplitError when the family lacks
// the groups it needs.
SplitManifest make_split(std::span<const Session> sessions, const ScenarioSpec& spec);

}  // namespace kstroke

#endif  // KSTROKE_EVAL_HPP_
