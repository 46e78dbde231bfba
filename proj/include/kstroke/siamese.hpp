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

// Siamese recurrent verifier over keystroke sequences.
//
// Each event becomes a triplet (action, keycode / 255, min-max time). The
// shared encoder is
//
//   LSTM(3 -> H) -> BatchNorm -> tanh -> Dropout -> Dense(H -> H)
//   LSTM(H -> H), last valid step -> BatchNorm -> tanh -> Dropout -> Dense(H -> H)
//
// Padded steps are skipped, so padding never changes an embedding. The first
// normalization pools over every valid step of every sequence in the batch;
// the second pools over sequences. Evaluation uses running statistics.
//
// A pair is scored s = (1 - cos(e_a, e_b)) / 2, the probability that the two
// sequences come from opposite classes, and trained with binary
// cross-entropy plus an L2 penalty on weight matrices.

#ifndef KSTROKE_SIAMESE_HPP_
#define KSTROKE_SIAMESE_HPP_

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "kstroke/random.hpp"
#include "kstroke/segmenter.hpp"

namespace kstroke {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct SeqSample {
  std::vector<std::array<double, 3>> triplets;  // length M
  std::vector<bool> mask;                       // true for real events
  SessionLabel label;

  std::size_t valid_length() const;
};

// Clips to the first M events or pads to M.
SeqSample prepare_sequence(const Window& window, std::size_t M);

struct SiameseConfig {
  std::size_t M = 50;
  std::size_t batch_size = 32;  // pairs per batch
  std::size_t hidden_dim = 16;
  double dropout = 0.5;
  double recurrent_dropout = 0.2;
  double lr = 1e-3;
  int epochs = 50;
  double l2 = 1e-4;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  // M in [25, 500]; batch size a power of two in [32, 512].
  void validate() const;
  friend bool operator==(const SiameseConfig&, const SiameseConfig&) = default;
};

struct LstmParams {
  Mat W;  // 4H x in, gate blocks i, f, g, o
  Mat U;  // 4H x H
  Vec b;  // 4H
};

struct BatchNormParams {
  Vec gamma, beta;
  Vec running_mean, running_var;  // buffers, not trained
};

struct DenseParams {
  Mat P;  // out x in
  Vec c;
};

struct SiameseParams {
  LstmParams lstm1, lstm2;
  BatchNormParams bn1, bn2;
  DenseParams fc1, fc2;

  static SiameseParams zeros_like(const SiameseParams& p);
  std::size_t trainable_count() const;
};

// Visits trainable tensors in a fixed order: name, data, rows, cols
// (row-major).
void for_each_tensor(SiameseParams& p,
                     const std::function<void(std::string_view, double*, long, long)>& fn);
void for_each_tensor(const SiameseParams& p,
                     const std::function<void(std::string_view, const double*, long, long)>& fn);

struct SiameseModel {
  SiameseConfig config;
  SiameseParams params;
  double threshold = 0.5;  // on pair score; >= means "opposite"
};

SiameseModel init_siamese(const SiameseConfig& cfg, std::uint64_t seed);

// Eval-mode embedding.
Vec embed(const SiameseModel& model, const SeqSample& s);

// (1 - cos) / 2. A zero-norm side yields 0.5 and sets *degenerate.
double score_embeddings(const Vec& a, const Vec& b, bool* degenerate = nullptr);
double pair_score(const SiameseModel& model, const SeqSample& a, const SeqSample& b,
                  bool* degenerate = nullptr);

struct PairBatch {
  std::vector<SeqSample> first;
  std::vector<SeqSample> second;
  std::vector<int> labels;  // 1 = opposite classes, 0 = same class

  std::size_t size() const { return labels.size(); }
};

// Builds class-balanced batches: half the pairs mix one bona fide and one
// assisted sample, half pair samples of the same class.
std::vector<PairBatch> sample_pair_batches(std::span<const SeqSample> samples,
                                           std::size_t pairs_per_batch, std::size_t n_batches,
                                           std::uint64_t seed);

struct ForwardOptions {
  bool batch_stats = true;  // normalize with batch statistics
  bool dropout = true;
};

struct BatchGradient {
  double loss = 0.0;  // summed BCE over pairs (no L2)
  SiameseParams grad;
  // Batch statistics of both normalization layers, for running updates.
  Vec bn1_mean, bn1_var, bn2_mean, bn2_var;
};

// Summed BCE over the batch and its exact gradient. `rng` drives dropout
// masks when opts.dropout is set.
BatchGradient loss_and_gradient(const SiameseModel& model, const PairBatch& batch,
                                const ForwardOptions& opts, Rng& rng);

// Summed BCE + (l2 / 2) * sum of squared weight-matrix entries.
double objective(const SiameseModel& model, const PairBatch& batch, const ForwardOptions& opts,
                 std::uint64_t dropout_seed);

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean BCE per pair
};

// Adam on mean BCE + L2 over cfg.epochs passes. Throws TrainingError if the
// loss becomes non-finite.
SiameseModel train_siamese(std::span<const PairBatch> batches, const SiameseConfig& cfg,
                           std::uint64_t seed, TrainHistory* history = nullptr);
SiameseModel train_siamese(SiameseModel model, std::span<const PairBatch> batches,
                           std::uint64_t seed, TrainHistory* history = nullptr);

// Resets normalization running statistics to the mean batch statistics of a
// dropout-free pass over `batches`. Training ends with this pass, so eval mode
// sees the activations it will be applied to.
void recalibrate_batch_norm(SiameseModel& model, std::span<const PairBatch> batches);

// EER threshold over scored validation pairs.
double decision_threshold(const SiameseModel& model, const PairBatch& validation_pairs);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t n_parameters = 0;
};

// Compares analytic gradients with central differences over every trainable
// parameter on a random batch, dropout off, batch statistics on. Relative
// error is |a - n| / max(|a|, |n|, 1e-8).
GradientCheckResult gradient_check(const SiameseConfig& cfg, std::uint64_t seed,
                                   std::size_t n_pairs = 4, double step = 1e-5);

}  // namespace kstroke

#endif  // KSTROKE_SIAMESE_HPP_
