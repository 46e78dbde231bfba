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

// Histogram-based gradient-boosted decision trees for binary classification
// under logistic loss. Label 1 is the positive (assisted) class.
//
// Each stage fits a depth-limited regression tree to the per-row gradient and
// hessian of the loss, with Newton leaf values -G / (H + l2) scaled by the
// learning rate. Split candidates are the boundaries of per-feature quantile
// bins; a split sends x <= threshold left, where the threshold is the largest
// training value in the left bin. If a stage would raise the training loss,
// its leaf values are halved until it no longer does.

#ifndef KSTROKE_GBDT_HPP_
#define KSTROKE_GBDT_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kstroke/features.hpp"

namespace kstroke {

struct GbdtConfig {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 1;
  int n_bins = 64;
  double subsample = 1.0;
  double l2 = 1.0;

  void validate() const;
  friend bool operator==(const GbdtConfig&, const GbdtConfig&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, learning rate already applied

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

inline constexpr double kLogitCap = 30.0;

struct GbdtModel {
  GbdtConfig config;
  std::vector<RegressionTree> trees;
  double base_logit = 0.0;
  std::size_t n_features = 0;
  std::string vocab_fingerprint;
  double threshold = 0.5;
  std::vector<double> train_loss;  // mean logistic loss after each stage

  // Raw additive score, clamped to [-kLogitCap, kLogitCap].
  double logit(std::span<const double> x) const;
  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

GbdtModel train_gbdt(std::span<const FeatureVector> data, const GbdtConfig& cfg,
                     std::uint64_t seed);

double predict_proba(const GbdtModel& model, std::span<const double> x);
inline double predict_proba(const GbdtModel& model, const FeatureVector& x) {
  return predict_proba(model, x.values);
}

// Mean logistic loss of the model over `data`.
double logistic_loss(const GbdtModel& model, std::span<const FeatureVector> data);

struct GridSearchResult {
  GbdtConfig best;
  double cv_f1 = 0.0;
  std::vector<double> mean_f1;  // per grid entry, in grid order
};

// Stratified k-fold search maximizing mean held-out F1 at threshold 0.5.
// Ties prefer fewer trees, then shallower trees, then grid order.
GridSearchResult grid_search_cv(std::span<const FeatureVector> data,
                                std::span<const GbdtConfig> grid, int folds,
                                std::uint64_t seed);

// Stratified fold assignment: fold index per row. Throws TrainingError when
// a class has fewer rows than folds.
std::vector<int> stratified_folds(std::span<const FeatureVector> data, int folds,
                                  std::uint64_t seed);

// n_trees {100, 300} x max_depth {3, 5, 8} x learning_rate {0.05, 0.1}.
std::vector<GbdtConfig> default_grid();

}  // namespace kstroke

#endif  // KSTROKE_GBDT_HPP_
