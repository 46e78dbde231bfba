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

// Response-level detectors and scenario evaluation.
//
// A detector scores a whole session; higher means more likely assisted. The
// GBDT detector averages window probabilities (or takes the share of flagged
// windows). The Siamese detector compares each window against bona fide
// reference windows from training and averages the pair scores.

#ifndef KSTROKE_PIPELINE_HPP_
#define KSTROKE_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kstroke/eval.hpp"
#include "kstroke/features.hpp"
#include "kstroke/gbdt.hpp"
#include "kstroke/segmenter.hpp"
#include "kstroke/siamese.hpp"

namespace kstroke {

enum class ModelKind { Gbdt, Siamese };
enum class Aggregation { Mean, Majority };

std::string_view to_string(ModelKind m);
ModelKind parse_model_kind(std::string_view text);
std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view text);

inline SiameseConfig desk_siamese_config() {
  SiameseConfig c;
  c.dropout = 0.0;
  c.recurrent_dropout = 0.0;
  c.lr = 3e-3;
  c.epochs = 20;
  return c;
}

struct PipelineConfig {
  ModelKind model = ModelKind::Gbdt;
  SegmentConfig segment;
  FeatureConfig features;
  std::size_t budget = 100;
  VocabBudget vocab_mode = VocabBudget::Combined;
  Aggregation aggregation = Aggregation::Mean;
  // Shift/length exclusion rules per path. They are stated for fixed-length
  // sequences, so only the Siamese path applies them by default.
  bool exclude_gbdt_windows = false;
  bool exclude_siamese_windows = true;

  GbdtConfig gbdt;
  bool grid_search = false;  // 5-fold search over default_grid()
  int cv_folds = 5;

  // Desk-scale defaults: with a 16-unit encoder, heavy dropout keeps the
  // pair loss near ln 2, so the pipeline trains without it.
  SiameseConfig siamese = desk_siamese_config();
  std::size_t siamese_references = 16;   // bona fide reference windows
  std::size_t siamese_batches = 16;      // pair batches per epoch
  double siamese_validation = 0.2;       // share of training sessions for the threshold

  std::uint64_t seed = 0;

  // Flat key/value echo for reports.
  std::map<std::string, std::string> echo() const;
};

class Detector {
 public:
  virtual ~Detector() = default;
  // Response-level score; flagged as assisted when >= threshold().
  virtual double score(const Session& session) const = 0;
  virtual double threshold() const = 0;
  bool flags(const Session& session) const { return score(session) >= threshold(); }
};

// Windows used for scoring a session: segment(), optionally exclude(), then
// the whole session when nothing is left.
std::vector<Window> scoring_windows(const Session& session, const SegmentConfig& cfg,
                                    bool exclude_windows = false);

class GbdtDetector : public Detector {
 public:
  GbdtDetector(FeatureVocabulary vocab, GbdtModel model, std::shared_ptr<const LexiconSet> lex,
               const PipelineConfig& cfg);

  double score(const Session& session) const override;
  double threshold() const override { return model_.threshold; }

  const FeatureVocabulary& vocabulary() const { return vocab_; }
  const GbdtModel& model() const { return model_; }

 private:
  FeatureVocabulary vocab_;
  GbdtModel model_;
  std::shared_ptr<const LexiconSet> lex_;
  PipelineConfig cfg_;
};

class SiameseDetector : public Detector {
 public:
  SiameseDetector(SiameseModel model, std::vector<SeqSample> references,
                  const PipelineConfig& cfg, double threshold);

  double score(const Session& session) const override;
  double threshold() const override { return threshold_; }

  const SiameseModel& model() const { return model_; }
  const std::vector<SeqSample>& references() const { return references_; }

 private:
  SiameseModel model_;
  std::vector<SeqSample> references_;
  std::vector<Vec> reference_embeddings_;
  PipelineConfig cfg_;
  double threshold_;
};

// Segment config used by the Siamese path: windows of exactly M events.
SegmentConfig siamese_segment_config(const PipelineConfig& cfg);

std::unique_ptr<GbdtDetector> train_gbdt_detector(std::span<const Session> train,
                                                  const PipelineConfig& cfg,
                                                  std::shared_ptr<const LexiconSet> lex);
std::unique_ptr<SiameseDetector> train_siamese_detector(std::span<const Session> train,
                                                        const PipelineConfig& cfg);
std::unique_ptr<Detector> train_detector(std::span<const Session> train,
                                         const PipelineConfig& cfg,
                                         std::shared_ptr<const LexiconSet> lex);

struct ScoredSession {
  std::string key;
  double score = 0.0;
  bool assisted = false;
};

struct GroupReport {
  std::string group;
  Metrics metrics;
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t n_test = 0;
};

struct EvalReport {
  std::string scenario;
  std::string model;
  double f1 = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double accuracy = 0.0;
  double eer = 0.0;
  double threshold = 0.0;
  bool degenerate = false;
  SplitManifest manifest;
  std::vector<GroupReport> groups;  // specific families, per-group mode
  std::vector<ScoredSession> scores;
  std::map<std::string, std::string> config;
};

// Trains on the training manifest only (vocabulary included) and scores the
// test manifest. Specific families in per-group mode train one detector per
// group and macro-average the group metrics.
EvalReport run_scenario(const PipelineConfig& cfg, std::span<const Session> sessions,
                        const ScenarioSpec& spec, std::shared_ptr<const LexiconSet> lex);

// Sessions selected by key, in manifest order. Throws SplitError on an
// unknown key.
std::vector<Session> select_sessions(std::span<const Session> sessions,
                                     std::span<const std::string> keys);

}  // namespace kstroke

#endif  // KSTROKE_PIPELINE_HPP_
