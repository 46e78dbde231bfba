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

#include "kstroke/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kstroke/errors.hpp"
#include "kstroke/random.hpp"

namespace kstroke {
namespace {

constexpr double kMinGain = 1e-12;
constexpr int kMaxHalvings = 40;

double softplus(double f) { return std::max(f, 0.0) + std::log1p(std::exp(-std::abs(f))); }

double sigmoid(double f) {
  if (f >= 0) return 1.0 / (1.0 + std::exp(-f));
  const double e = std::exp(f);
  return e / (1.0 + e);
}

double mean_loss(std::span<const double> f, std::span<const int> y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += softplus(f[i]) - y[i] * f[i];
  return sum / static_cast<double>(f.size());
}

// Quantile bins for one feature. `upper[b]` is the largest value in bin b.
struct FeatureBins {
  std::vector<double> upper;

  std::uint16_t bin_of(double v) const {
    auto it = std::lower_bound(upper.begin(), upper.end(), v);
    if (it == upper.end()) --it;
    return static_cast<std::uint16_t>(it - upper.begin());
  }
};

// Greedy equal-frequency binning over sorted distinct values. A value whose
// count alone reaches the per-bin target gets a bin to itself.
FeatureBins make_bins(std::vector<double> values, int n_bins) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, std::size_t>> distinct;
  for (double v : values) {
    if (!distinct.empty() && distinct.back().first == v) {
      ++distinct.back().second;
    } else {
      distinct.emplace_back(v, 1);
    }
  }
  FeatureBins bins;
  if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
    for (const auto& d : distinct) bins.upper.push_back(d.first);
    return bins;
  }
  const double target = static_cast<double>(values.size()) / n_bins;
  double filled = 0.0;
  bool open = false;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    const auto [v, c] = distinct[i];
    if (open && static_cast<double>(c) >= target) {
      bins.upper.push_back(distinct[i - 1].first);
      filled = 0.0;
      open = false;
    }
    filled += static_cast<double>(c);
    open = true;
    if (filled >= target) {
      bins.upper.push_back(v);
      filled = 0.0;
      open = false;
    }
  }
  if (open) bins.upper.push_back(distinct.back().first);
  return bins;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  int bin = -1;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureBins>& bins, const std::vector<std::uint16_t>& binned,
              std::size_t n_rows, const GbdtConfig& cfg)
      : bins_(bins), binned_(binned), n_rows_(n_rows), cfg_(cfg) {}

  RegressionTree build(std::vector<std::size_t> rows, std::span<const double> grad,
                       std::span<const double> hess) {
    RegressionTree tree;
    grow(tree, std::move(rows), grad, hess, 0);
    return tree;
  }

 private:
  int grow(RegressionTree& tree, std::vector<std::size_t> rows, std::span<const double> grad,
           std::span<const double> hess, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (std::size_t r : rows) {
      g_sum += grad[r];
      h_sum += hess[r];
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    SplitChoice best;
    if (depth < cfg_.max_depth && rows.size() >= 2 * static_cast<std::size_t>(cfg_.min_leaf)) {
      best = find_split(rows, grad, hess, g_sum, h_sum);
    }
    if (best.feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value =
          -g_sum / (h_sum + cfg_.l2) * cfg_.learning_rate;
      return id;
    }

    const std::uint16_t* col = &binned_[static_cast<std::size_t>(best.feature) * n_rows_];
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (col[r] <= best.bin ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, std::move(left), grad, hess, depth + 1);
    const int rgt = grow(tree, std::move(right), grad, hess, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = bins_[static_cast<std::size_t>(best.feature)].upper[
        static_cast<std::size_t>(best.bin)];
    node.left = l;
    node.right = rgt;
    return id;
  }

  SplitChoice find_split(const std::vector<std::size_t>& rows, std::span<const double> grad,
                         std::span<const double> hess, double g_sum, double h_sum) const {
    SplitChoice best;
    const double parent = g_sum * g_sum / (h_sum + cfg_.l2);
    std::vector<double> hg, hh;
    std::vector<std::size_t> hc;
    for (std::size_t j = 0; j < bins_.size(); ++j) {
      const std::size_t nb = bins_[j].upper.size();
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      const std::uint16_t* col = &binned_[j * n_rows_];
      for (std::size_t r : rows) {
        const std::uint16_t b = col[r];
        hg[b] += grad[r];
        hh[b] += hess[r];
        ++hc[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b];
        hl += hh[b];
        cl += hc[b];
        const std::size_t cr = rows.size() - cl;
        if (cl < static_cast<std::size_t>(cfg_.min_leaf)) continue;
        if (cr < static_cast<std::size_t>(cfg_.min_leaf)) break;
        if (hc[b] == 0 && cl > 0 && b > 0) {
          // Same partition as the previous boundary; keep the lower threshold.
          continue;
        }
        const double gr = g_sum - gl, hr = h_sum - hl;
        const double gain = gl * gl / (hl + cfg_.l2) + gr * gr / (hr + cfg_.l2) - parent;
        if (gain > kMinGain && gain > best.gain) {
          best = {gain, static_cast<int>(j), static_cast<int>(b)};
        }
      }
    }
    return best;
  }

  const std::vector<FeatureBins>& bins_;
  const std::vector<std::uint16_t>& binned_;
  std::size_t n_rows_;
  const GbdtConfig& cfg_;
};

void scale_leaves(RegressionTree& tree, double factor) {
  for (TreeNode& n : tree.nodes) {
    if (n.is_leaf()) n.value *= factor;
  }
}

double f1_at_half(std::span<const double> probs, std::span<const int> labels) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= 0.5;
    if (pred && labels[i] == 1) ++tp;
    if (pred && labels[i] == 0) ++fp;
    if (!pred && labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

void GbdtConfig::validate() const {
  if (n_trees < 0) throw ConfigError("n_trees must be non-negative");
  if (max_depth < 0) throw ConfigError("max_depth must be non-negative");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("learning_rate must lie in (0, 1]");
  }
  if (min_leaf < 1) throw ConfigError("min_leaf must be positive");
  if (n_bins < 2 || n_bins > 65535) throw ConfigError("n_bins must lie in [2, 65535]");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
  if (l2 < 0.0) throw ConfigError("l2 must be non-negative");
}

double RegressionTree::predict(std::span<const double> x) const {
  if (nodes.empty()) return 0.0;
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
  }
  return nodes[i].value;
}

double GbdtModel::logit(std::span<const double> x) const {
  double f = base_logit;
  for (const RegressionTree& t : trees) f += t.predict(x);
  return std::clamp(f, -kLogitCap, kLogitCap);
}

GbdtModel train_gbdt(std::span<const FeatureVector> data, const GbdtConfig& cfg,
                     std::uint64_t seed) {
  cfg.validate();
  if (data.size() < 2) throw TrainingError("need at least two training examples");
  const std::size_t n = data.size();
  const std::size_t d = data.front().values.size();
  std::vector<int> y(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (data[i].values.size() != d) {
      throw DimensionError("row " + std::to_string(i) + " has " +
                           std::to_string(data[i].values.size()) + " features, expected " +
                           std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (std::isnan(data[i].values[j])) {
        throw TrainingError("NaN in feature " + std::to_string(j) + " (row " +
                            std::to_string(i) + ")");
      }
    }
    y[i] = data[i].label.is_assisted ? 1 : 0;
    positives += static_cast<std::size_t>(y[i]);
  }
  if (positives == 0 || positives == n) {
    throw TrainingError("training data contains a single class");
  }

  std::vector<FeatureBins> bins(d);
  std::vector<std::uint16_t> binned(n * d);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = data[i].values[j];
    bins[j] = make_bins(column, cfg.n_bins);
    for (std::size_t i = 0; i < n; ++i) binned[j * n + i] = bins[j].bin_of(column[i]);
  }

  GbdtModel model;
  model.config = cfg;
  model.n_features = d;
  const double prior = static_cast<double>(positives) / static_cast<double>(n);
  model.base_logit = std::log(prior / (1.0 - prior));

  std::vector<double> f(n, model.base_logit), grad(n), hess(n), trial(n);
  double loss = mean_loss(f, y);
  Rng rng(seed);
  TreeBuilder builder(bins, binned, n, cfg);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const std::size_t sample_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.subsample * static_cast<double>(n))));

  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(f[i]);
      grad[i] = p - y[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    std::vector<std::size_t> rows = all_rows;
    if (sample_size < n) {
      rng.shuffle(rows.begin(), rows.end());
      rows.resize(sample_size);
      std::sort(rows.begin(), rows.end());
    }
    RegressionTree tree = builder.build(std::move(rows), grad, hess);

    // Row i follows the same path whether routed by bin or by raw value.
    auto leaf_value = [&](std::size_t i) { return tree.predict(data[i].values); };
    double new_loss = 0.0;
    int halvings = 0;
    for (;;) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = f[i] + leaf_value(i);
      new_loss = mean_loss(trial, y);
      if (new_loss <= loss) break;
      if (++halvings > kMaxHalvings) {
        scale_leaves(tree, 0.0);
        trial = f;
        new_loss = loss;
        break;
      }
      scale_leaves(tree, 0.5);
    }
    f.swap(trial);
    loss = new_loss;
    model.train_loss.push_back(loss);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_proba(const GbdtModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw DimensionError("feature vector has " + std::to_string(x.size()) +
                         " entries, model expects " + std::to_string(model.n_features));
  }
  return sigmoid(model.logit(x));
}

double logistic_loss(const GbdtModel& model, std::span<const FeatureVector> data) {
  double sum = 0.0;
  for (const FeatureVector& fv : data) {
    const double f = model.logit(fv.values);
    sum += softplus(f) - (fv.label.is_assisted ? f : 0.0);
  }
  return data.empty() ? 0.0 : sum / static_cast<double>(data.size());
}

std::vector<int> stratified_folds(std::span<const FeatureVector> data, int folds,
                                  std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least two folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (data[i].label.is_assisted ? pos : neg).push_back(i);
  }
  const auto k = static_cast<std::size_t>(folds);
  if (pos.size() < k || neg.size() < k) {
    throw TrainingError("cannot stratify " + std::to_string(pos.size()) + " positive and " +
                        std::to_string(neg.size()) + " negative rows into " +
                        std::to_string(folds) + " folds");
  }
  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::vector<int> assignment(data.size(), 0);
  for (std::size_t i = 0; i < pos.size(); ++i) assignment[pos[i]] = static_cast<int>(i % k);
  for (std::size_t i = 0; i < neg.size(); ++i) assignment[neg[i]] = static_cast<int>(i % k);
  return assignment;
}

GridSearchResult grid_search_cv(std::span<const FeatureVector> data,
                                std::span<const GbdtConfig> grid, int folds,
                                std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");
  const std::vector<int> fold_of = stratified_folds(data, folds, seed);

  GridSearchResult result;
  std::size_t best_idx = 0;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    double sum_f1 = 0.0;
    for (int k = 0; k < folds; ++k) {
      std::vector<FeatureVector> train, test;
      for (std::size_t i = 0; i < data.size(); ++i) {
        (fold_of[i] == k ? test : train).push_back(data[i]);
      }
      const GbdtModel m = train_gbdt(train, grid[c], derive_seed(seed, static_cast<std::uint64_t>(k)));
      std::vector<double> probs;
      std::vector<int> labels;
      for (const FeatureVector& fv : test) {
        probs.push_back(predict_proba(m, fv));
        labels.push_back(fv.label.is_assisted ? 1 : 0);
      }
      sum_f1 += f1_at_half(probs, labels);
    }
    const double mean = sum_f1 / folds;
    result.mean_f1.push_back(mean);
    if (c == 0) continue;
    const GbdtConfig& cur = grid[c];
    const GbdtConfig& inc = grid[best_idx];
    const double best_f1 = result.mean_f1[best_idx];
    const bool better =
        mean > best_f1 ||
        (mean == best_f1 && (cur.n_trees < inc.n_trees ||
                             (cur.n_trees == inc.n_trees && cur.max_depth < inc.max_depth)));
    if (better) best_idx = c;
  }
  result.best = grid[best_idx];
  result.cv_f1 = result.mean_f1[best_idx];
  return result;
}

std::vector<GbdtConfig> default_grid() {
  std::vector<GbdtConfig> grid;
  for (int trees : {100, 300}) {
    for (int depth : {3, 5, 8}) {
      for (double lr : {0.05, 0.1}) {
        GbdtConfig c;
        c.n_trees = trees;
        c.max_depth = depth;
        c.learning_rate = lr;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

}  // namespace kstroke
