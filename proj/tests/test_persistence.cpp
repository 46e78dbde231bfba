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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "kstroke/deception.hpp"
#include "kstroke/errors.hpp"
#include "kstroke/persistence.hpp"
#include "kstroke/random.hpp"
#include "kstroke/synth.hpp"
#include "oracles.hpp"

namespace kstroke {
namespace {

namespace fs = std::filesystem;

class Persistence : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("kstroke_persist_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

std::vector<FeatureVector> random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureVector> out(n);
  for (auto& r : out) {
    for (std::size_t j = 0; j < d; ++j) r.values.push_back(rng.uniform(-3, 3));
    if (rng.uniform(0, 1) < 0.1) r.values[0] = -1.0;
    r.label.is_assisted = r.values[1] + 0.5 * r.values[2] > 0;
  }
  return out;
}

GbdtModel small_model() {
  GbdtConfig cfg;
  cfg.n_trees = 20;
  cfg.max_depth = 3;
  return train_gbdt(random_rows(200, 5, 3), cfg, 9);
}

std::vector<Session> small_corpus() {
  const std::vector<RegimeSpec> regimes = {RegimeSpec::defaults(Mode::BonaFide),
                                           RegimeSpec::defaults(Mode::Transcribed)};
  return generate_corpus(3, 1, 300, regimes, 11);
}

TEST_F(Persistence, VocabRoundTrip) {
  FeatureVocabulary v;
  v.items = {{65, -1, 9}, {65, 66, 7}, {32, -1, 3}};
  v.fingerprint = "abc";
  save_vocab(dir_ / "v.artifact", v, "fp");
  EXPECT_EQ(load_vocab(dir_ / "v.artifact"), v);
}

TEST_F(Persistence, GbdtRoundTripPredictsIdentically) {
  const GbdtModel m = small_model();
  save_gbdt(dir_ / "g.artifact", m);
  const GbdtModel back = load_gbdt(dir_ / "g.artifact");
  EXPECT_EQ(back, m);
  for (const auto& r : random_rows(100, 5, 77)) {
    EXPECT_EQ(predict_proba(back, r), predict_proba(m, r));  // bitwise
  }
}

TEST_F(Persistence, SiameseRoundTripWithReferences) {
  SiameseConfig cfg;
  cfg.M = 10;
  cfg.hidden_dim = 4;
  SiameseModel m = init_siamese(cfg, 5);
  m.threshold = 0.4321;
  std::vector<SeqSample> refs;
  for (const auto& s : small_corpus()) {
    if (s.label().is_assisted) continue;
    Window w;
    w.events = s.events;
    w.label = s.label();
    refs.push_back(prepare_sequence(w, cfg.M));
  }
  save_siamese(dir_ / "s.artifact", m, refs);
  std::vector<SeqSample> refs_back;
  const SiameseModel back = load_siamese(dir_ / "s.artifact", &refs_back);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.threshold, m.threshold);
  std::vector<std::vector<double>> a, b;
  for_each_tensor(m.params, [&](std::string_view, const double* p, long r, long c) {
    a.emplace_back(p, p + r * c);
  });
  for_each_tensor(back.params, [&](std::string_view, const double* p, long r, long c) {
    b.emplace_back(p, p + r * c);
  });
  EXPECT_EQ(a, b);
  EXPECT_EQ(back.params.bn1.running_mean, m.params.bn1.running_mean);
  EXPECT_EQ(back.params.bn2.running_var, m.params.bn2.running_var);
  ASSERT_EQ(refs_back.size(), refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    EXPECT_EQ(refs_back[i].triplets, refs[i].triplets);
    EXPECT_EQ(refs_back[i].mask, refs[i].mask);
    EXPECT_EQ(refs_back[i].label, refs[i].label);
    EXPECT_EQ(pair_score(back, refs_back[i], refs_back[0]), pair_score(m, refs[i], refs[0]));
  }
}

TEST_F(Persistence, TimingDictionaryRoundTrip) {
  const TimingDictionary d = build_dictionary(small_corpus());
  save_timing_dictionary(dir_ / "t.artifact", d);
  EXPECT_EQ(load_timing_dictionary(dir_ / "t.artifact"), d);
}

TEST_F(Persistence, ReportRoundTripKeepsNonFinite) {
  EvalReport r;
  r.scenario = "user-agnostic";
  r.model = "gbdt";
  r.f1 = 0.875;
  r.eer = std::numeric_limits<double>::quiet_NaN();
  r.threshold = std::numeric_limits<double>::infinity();
  r.far = 0.1;
  r.config = {{"window", "1000"}};
  r.scores = {{"d/u/s", 0.25, true}, {"d/u/t", -std::numeric_limits<double>::infinity(), false}};
  r.manifest.train = {"d/u/x"};
  r.manifest.test = {"d/u/s", "d/u/t"};
  save_report(dir_ / "r.artifact", r);
  const EvalReport b = load_report(dir_ / "r.artifact");
  EXPECT_EQ(b.scenario, r.scenario);
  EXPECT_EQ(b.f1, r.f1);
  EXPECT_TRUE(std::isnan(b.eer));
  EXPECT_EQ(b.threshold, r.threshold);
  EXPECT_EQ(b.config, r.config);
  ASSERT_EQ(b.scores.size(), 2u);
  EXPECT_EQ(b.scores[1].score, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(b.manifest.test, r.manifest.test);
}

TEST_F(Persistence, PipelineConfigRoundTrip) {
  PipelineConfig c;
  c.model = ModelKind::Siamese;
  c.segment.window_size = 500;
  c.segment.overlap = 100;
  c.budget = 40;
  c.seed = 99;
  const PipelineConfig b = pipeline_config_from_json(to_json(c));
  EXPECT_EQ(b.echo(), c.echo());
}

TEST_F(Persistence, TruncationIsAChecksumError) {
  save_gbdt(dir_ / "g.artifact", small_model());
  const std::string full = slurp(dir_ / "g.artifact");
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, full.size() / 2, full.size() - 1}) {
    spit(dir_ / "cut.artifact", full.substr(0, cut));
    EXPECT_THROW(load_gbdt(dir_ / "cut.artifact"), ChecksumError) << "cut at " << cut;
  }
}

TEST_F(Persistence, RandomBitFlipsNeverLoad) {
  save_gbdt(dir_ / "g.artifact", small_model());
  const std::string full = slurp(dir_ / "g.artifact");
  Rng rng(4);
  int checksum = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::string bad = full;
    const std::size_t pos = rng.index(bad.size());
    bad[pos] = static_cast<char>(bad[pos] ^ (1 << rng.index(8)));
    try {
      decode_artifact(bad, ArtifactKind::Gbdt);
      ADD_FAILURE() << "flip at " << pos << " decoded";
    } catch (const ChecksumError&) {
      ++checksum;
    } catch (const PersistenceError&) {
    }
  }
  // Only flips inside the checksum line itself may surface as anything else.
  EXPECT_GE(checksum, 190);
}

TEST_F(Persistence, KindMismatch) {
  FeatureVocabulary v;
  v.items = {{65, -1, 1}};
  save_vocab(dir_ / "v.artifact", v);
  EXPECT_THROW(load_gbdt(dir_ / "v.artifact"), KindMismatchError);
  EXPECT_NO_THROW(read_artifact(dir_ / "v.artifact", std::nullopt));
}

TEST_F(Persistence, FutureVersionRejected) {
  ArtifactHeader h;
  h.kind = ArtifactKind::Vocab;
  h.format_version = kFormatVersion + 1;
  h.created = creation_time();
  spit(dir_ / "v2.artifact", encode_artifact(h, to_json(FeatureVocabulary{})));
  EXPECT_THROW(load_vocab(dir_ / "v2.artifact"), VersionError);
}

TEST_F(Persistence, MissingFileIsAnError) {
  EXPECT_THROW(load_gbdt(dir_ / "absent.artifact"), Error);
}

TEST_F(Persistence, CreatedHonorsSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  EXPECT_EQ(creation_time(), "2023-11-14T22:13:20Z");
  save_gbdt(dir_ / "a.artifact", small_model());
  save_gbdt(dir_ / "b.artifact", small_model());
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(slurp(dir_ / "a.artifact"), slurp(dir_ / "b.artifact"));
  EXPECT_EQ(read_artifact(dir_ / "a.artifact", ArtifactKind::Gbdt).header.created,
            "2023-11-14T22:13:20Z");
}

TEST_F(Persistence, AtomicWriteLeavesNoTemporaries) {
  write_file_atomic(dir_ / "x.txt", "one");
  write_file_atomic(dir_ / "x.txt", "two");
  EXPECT_EQ(slurp(dir_ / "x.txt"), "two");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_)) ++n;
  EXPECT_EQ(n, 1u);
}

TEST(CorpusFingerprint, DeterministicAndSensitive) {
  auto corpus = small_corpus();
  const std::string a = corpus_fingerprint(corpus);
  EXPECT_EQ(a, corpus_fingerprint(small_corpus()));
  corpus[0].events[0].timestamp += 1;
  EXPECT_NE(a, corpus_fingerprint(corpus));
}

}  // namespace
}  // namespace kstroke
