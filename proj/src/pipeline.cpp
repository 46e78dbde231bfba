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

#include "kstroke/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "kstroke/errors.hpp"
#include "kstroke/random.hpp"

namespace kstroke {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::uint64_t group_seed(std::uint64_t seed, std::string_view group) {
  Fingerprint fp;
  fp.update(group);
  return derive_seed(seed, fp.value());
}

Window whole_session(const Session& s) {
  Window w;
  w.session_key = s.key();
  w.user_id = s.user_id;
  w.events = s.events;
  w.label = s.label();
  return w;
}

std::vector<SeqSample> session_sequences(const Session& s, const PipelineConfig& cfg,
                                         bool keep_fallback) {
  const SegmentConfig seg = siamese_segment_config(cfg);
  std::vector<Window> all = segment(s, seg);
  std::vector<Window> kept =
      cfg.exclude_siamese_windows ? exclude(all, seg, cfg.siamese.M) : all;
  if (kept.empty() && keep_fallback) {
    kept = all.empty() ? std::vector<Window>{whole_session(s)} : std::vector<Window>{all.front()};
  }
  std::vector<SeqSample> out;
  out.reserve(kept.size());
  for (const Window& w : kept) out.push_back(prepare_sequence(w, cfg.siamese.M));
  return out;
}

std::vector<ScoredLabel> to_scored(std::span<const ScoredSession> s) {
  std::vector<ScoredLabel> out;
  out.reserve(s.size());
  for (const ScoredSession& x : s) out.push_back({x.score, x.assisted});
  return out;
}

bool both_classes(std::span<const ScoredSession> s) {
  bool pos = false, neg = false;
  for (const ScoredSession& x : s) (x.assisted ? pos : neg) = true;
  return pos && neg;
}

std::vector<ScoredSession> score_all(const Detector& det, std::span<const Session> sessions) {
  std::vector<ScoredSession> out;
  out.reserve(sessions.size());
  for (const Session& s : sessions) out.push_back({s.key(), det.score(s), s.label().is_assisted});
  return out;
}

}  // namespace

std::string_view to_string(ModelKind m) { return m == ModelKind::Gbdt ? "gbdt" : "siamese"; }

ModelKind parse_model_kind(std::string_view text) {
  const std::string t = lower(text);
  if (t == "gbdt") return ModelKind::Gbdt;
  if (t == "siamese") return ModelKind::Siamese;
  throw ConfigError("unknown model '" + std::string(text) + "' (expected gbdt or siamese)");
}

std::string_view to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "majority"; }

Aggregation parse_aggregation(std::string_view text) {
  const std::string t = lower(text);
  if (t == "mean") return Aggregation::Mean;
  if (t == "majority") return Aggregation::Majority;
  throw ConfigError("unknown aggregation '" + std::string(text) + "'");
}

std::map<std::string, std::string> PipelineConfig::echo() const {
  std::map<std::string, std::string> m;
  m["model"] = std::string(to_string(model));
  m["window"] = std::to_string(segment.window_size);
  m["overlap"] = std::to_string(segment.overlap);
  m["kit_variant"] = std::string(to_string(features.kit));
  m["pause_threshold_ms"] = fmt(features.pause_threshold_ms);
  m["min_observations"] = std::to_string(features.min_observations);
  m["budget"] = std::to_string(budget);
  m["vocab_mode"] = vocab_mode == VocabBudget::Combined ? "combined" : "per-kind";
  m["aggregation"] = std::string(to_string(aggregation));
  m["exclude_gbdt_windows"] = exclude_gbdt_windows ? "true" : "false";
  m["exclude_siamese_windows"] = exclude_siamese_windows ? "true" : "false";
  m["seed"] = std::to_string(seed);
  if (model == ModelKind::Gbdt) {
    m["gbdt.n_trees"] = std::to_string(gbdt.n_trees);
    m["gbdt.max_depth"] = std::to_string(gbdt.max_depth);
    m["gbdt.learning_rate"] = fmt(gbdt.learning_rate);
    m["gbdt.grid_search"] = grid_search ? "true" : "false";
  } else {
    m["siamese.M"] = std::to_string(siamese.M);
    m["siamese.batch_size"] = std::to_string(siamese.batch_size);
    m["siamese.hidden_dim"] = std::to_string(siamese.hidden_dim);
    m["siamese.lr"] = fmt(siamese.lr);
    m["siamese.epochs"] = std::to_string(siamese.epochs);
    m["siamese.references"] = std::to_string(siamese_references);
  }
  return m;
}

std::vector<Window> scoring_windows(const Session& session, const SegmentConfig& cfg,
                                    bool exclude_windows) {
  std::vector<Window> w = segment(session, cfg);
  if (exclude_windows) w = exclude(std::move(w), cfg, cfg.window_size);
  if (w.empty()) w.push_back(whole_session(session));
  return w;
}

GbdtDetector::GbdtDetector(FeatureVocabulary vocab, GbdtModel model,
                           std::shared_ptr<const LexiconSet> lex, const PipelineConfig& cfg)
    : vocab_(std::move(vocab)), model_(std::move(model)), lex_(std::move(lex)), cfg_(cfg) {
  if (!lex_) throw ConfigError("detector needs a lexicon set");
}

double GbdtDetector::score(const Session& session) const {
  const std::vector<Window> windows = scoring_windows(session, cfg_.segment, cfg_.exclude_gbdt_windows);
  double acc = 0.0;
  for (const Window& w : windows) {
    const double p = predict_proba(model_, featurize(w, vocab_, *lex_, cfg_.features));
    acc += cfg_.aggregation == Aggregation::Mean ? p : (p >= model_.threshold ? 1.0 : 0.0);
  }
  return acc / static_cast<double>(windows.size());
}

SegmentConfig siamese_segment_config(const PipelineConfig& cfg) {
  SegmentConfig seg = cfg.segment;
  seg.window_size = cfg.siamese.M;
  seg.overlap = 0;
  return seg;
}

SiameseDetector::SiameseDetector(SiameseModel model, std::vector<SeqSample> references,
                                 const PipelineConfig& cfg, double threshold)
    : model_(std::move(model)), references_(std::move(references)), cfg_(cfg),
      threshold_(threshold) {
  if (references_.empty()) throw ConfigError("Siamese detector needs reference windows");
  for (const SeqSample& r : references_) reference_embeddings_.push_back(embed(model_, r));
}

double SiameseDetector::score(const Session& session) const {
  const std::vector<SeqSample> probes = session_sequences(session, cfg_, true);
  double total = 0.0;
  for (const SeqSample& p : probes) {
    const Vec e = embed(model_, p);
    double acc = 0.0;
    for (const Vec& r : reference_embeddings_) acc += score_embeddings(e, r);
    const double mean = acc / static_cast<double>(reference_embeddings_.size());
    total += cfg_.aggregation == Aggregation::Mean ? mean : (mean >= threshold_ ? 1.0 : 0.0);
  }
  return total / static_cast<double>(probes.size());
}

std::unique_ptr<GbdtDetector> train_gbdt_detector(std::span<const Session> train,
                                                  const PipelineConfig& cfg,
                                                  std::shared_ptr<const LexiconSet> lex) {
  if (!lex) throw ConfigError("detector needs a lexicon set");
  cfg.segment.validate();
  std::vector<Window> windows;
  for (const Session& s : train) {
    std::vector<Window> w = scoring_windows(s, cfg.segment, cfg.exclude_gbdt_windows);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()),
                   std::make_move_iterator(w.end()));
  }
  FeatureVocabulary vocab = build_vocabulary(windows, cfg.budget, cfg.vocab_mode);
  std::vector<FeatureVector> rows;
  rows.reserve(windows.size());
  for (const Window& w : windows) rows.push_back(featurize(w, vocab, *lex, cfg.features));

  GbdtConfig gcfg = cfg.gbdt;
  if (cfg.grid_search) {
    try {
      const std::vector<GbdtConfig> grid = default_grid();
      gcfg = grid_search_cv(rows, grid, cfg.cv_folds, derive_seed(cfg.seed, 11)).best;
    } catch (const TrainingError&) {
      // Too few rows per class for the folds; keep the configured model.
    }
  }
  GbdtModel model = train_gbdt(rows, gcfg, derive_seed(cfg.seed, 12));
  model.vocab_fingerprint = vocab.fingerprint;
  return std::make_unique<GbdtDetector>(std::move(vocab), std::move(model), std::move(lex), cfg);
}

std::unique_ptr<SiameseDetector> train_siamese_detector(std::span<const Session> train,
                                                        const PipelineConfig& cfg) {
  cfg.siamese.validate();
  // Hold out part of each class for the threshold.
  std::vector<const Session*> pos, neg;
  for (const Session& s : train) (s.label().is_assisted ? pos : neg).push_back(&s);
  if (pos.empty() || neg.empty()) throw TrainingError("Siamese training needs both classes");
  Rng rng(derive_seed(cfg.seed, 21));
  std::vector<const Session*> fit, val;
  for (auto* cls : {&neg, &pos}) {
    rng.shuffle(cls->begin(), cls->end());
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(cfg.siamese_validation * static_cast<double>(cls->size())));
    if (cls->size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, cls->size() - 1);
    else n_val = 0;
    for (std::size_t i = 0; i < cls->size(); ++i) (i < n_val ? val : fit).push_back((*cls)[i]);
  }

  std::vector<SeqSample> samples, references;
  for (const Session* s : fit) {
    std::vector<SeqSample> seqs = session_sequences(*s, cfg, false);
    for (SeqSample& q : seqs) {
      if (!q.label.is_assisted) references.push_back(q);
      samples.push_back(std::move(q));
    }
  }
  std::vector<PairBatch> batches = sample_pair_batches(samples, cfg.siamese.batch_size,
                                                       cfg.siamese_batches,
                                                       derive_seed(cfg.seed, 22));
  SiameseModel model = train_siamese(batches, cfg.siamese, derive_seed(cfg.seed, 23));

  rng.shuffle(references.begin(), references.end());
  if (references.size() > cfg.siamese_references) references.resize(cfg.siamese_references);
  SiameseDetector provisional(model, references, cfg, 0.5);

  std::vector<ScoredSession> scored;
  const auto& thr_sessions = val.empty() ? fit : val;
  for (const Session* s : thr_sessions) {
    scored.push_back({s->key(), provisional.score(*s), s->label().is_assisted});
  }
  double threshold = 0.5;
  if (both_classes(scored)) threshold = roc_eer(to_scored(scored)).threshold;
  model.threshold = threshold;
  return std::make_unique<SiameseDetector>(std::move(model), std::move(references), cfg,
                                           threshold);
}

std::unique_ptr<Detector> train_detector(std::span<const Session> train,
                                         const PipelineConfig& cfg,
                                         std::shared_ptr<const LexiconSet> lex) {
  if (cfg.model == ModelKind::Gbdt) return train_gbdt_detector(train, cfg, std::move(lex));
  return train_siamese_detector(train, cfg);
}

std::vector<Session> select_sessions(std::span<const Session> sessions,
                                     std::span<const std::string> keys) {
  std::unordered_map<std::string, const Session*> index;
  for (const Session& s : sessions) index.emplace(s.key(), &s);
  std::vector<Session> out;
  out.reserve(keys.size());
  for (const std::string& k : keys) {
    auto it = index.find(k);
    if (it == index.end()) throw SplitError("manifest names unknown session '" + k + "'");
    out.push_back(*it->second);
  }
  return out;
}

EvalReport run_scenario(const PipelineConfig& cfg, std::span<const Session> sessions,
                        const ScenarioSpec& spec, std::shared_ptr<const LexiconSet> lex) {
  EvalReport report;
  report.scenario = std::string(to_string(spec.family));
  report.model = std::string(to_string(cfg.model));
  report.config = cfg.echo();
  report.config["scenario"] = report.scenario;
  report.config["split_fraction"] = fmt(spec.split_fraction);
  report.config["split_seed"] = std::to_string(spec.seed);
  report.manifest = make_split(sessions, spec);
  const SplitManifest& m = report.manifest;

  if (is_agnostic(spec.family)) {
    std::set<std::string> train_keys, test_keys;
    for (const Session& s : select_sessions(sessions, m.train)) {
      if (auto g = group_of(s, spec.family)) train_keys.insert(*g);
    }
    for (const Session& s : select_sessions(sessions, m.test)) {
      if (auto g = group_of(s, spec.family)) {
        if (train_keys.contains(*g)) {
          throw SplitError(report.scenario + ": group '" + *g + "' appears in train and test");
        }
        test_keys.insert(*g);
      }
    }
  }

  if (!is_agnostic(spec.family) && spec.per_group) {
    double f1 = 0, far = 0, frr = 0, acc = 0, eer = 0, thr = 0;
    for (const GroupSplit& gs : m.groups) {
      PipelineConfig gcfg = cfg;
      gcfg.seed = group_seed(cfg.seed, gs.group);
      const std::vector<Session> train = select_sessions(sessions, gs.train);
      const std::vector<Session> test = select_sessions(sessions, gs.test);
      const std::unique_ptr<Detector> det = train_detector(train, gcfg, lex);
      std::vector<ScoredSession> scored = score_all(*det, test);
      GroupReport gr;
      gr.group = gs.group;
      gr.n_test = test.size();
      gr.threshold = det->threshold();
      const std::vector<ScoredLabel> sl = to_scored(scored);
      gr.metrics = metrics(sl, gr.threshold);
      if (both_classes(scored)) gr.eer = roc_eer(sl).eer;
      f1 += gr.metrics.f1;
      far += gr.metrics.far;
      frr += gr.metrics.frr;
      acc += gr.metrics.accuracy;
      eer += gr.eer;
      thr += gr.threshold;
      report.degenerate = report.degenerate || gr.metrics.degenerate;
      report.scores.insert(report.scores.end(), scored.begin(), scored.end());
      report.groups.push_back(std::move(gr));
    }
    const double n = static_cast<double>(report.groups.size());
    report.f1 = f1 / n;
    report.far = far / n;
    report.frr = frr / n;
    report.accuracy = acc / n;
    report.eer = eer / n;
    report.threshold = thr / n;
    report.config["aggregate"] = "macro";
    return report;
  }

  const std::vector<Session> train = select_sessions(sessions, m.train);
  const std::vector<Session> test = select_sessions(sessions, m.test);
  const std::unique_ptr<Detector> det = train_detector(train, cfg, lex);
  report.scores = score_all(*det, test);
  report.threshold = det->threshold();
  const std::vector<ScoredLabel> sl = to_scored(report.scores);
  const Metrics mt = metrics(sl, report.threshold);
  report.f1 = mt.f1;
  report.far = mt.far;
  report.frr = mt.frr;
  report.accuracy = mt.accuracy;
  report.degenerate = mt.degenerate;
  if (both_classes(report.scores)) {
    report.eer = roc_eer(sl).eer;
  } else {
    report.degenerate = true;
  }
  report.config["aggregate"] = "pooled";
  return report;
}

}  // namespace kstroke
