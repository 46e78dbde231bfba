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

#include "kstroke/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kstroke/deception.hpp"
#include "kstroke/errors.hpp"
#include "kstroke/eval.hpp"
#include "kstroke/features.hpp"
#include "kstroke/logmodel.hpp"
#include "kstroke/persistence.hpp"
#include "kstroke/pipeline.hpp"
#include "kstroke/random.hpp"
#include "kstroke/segmenter.hpp"
#include "kstroke/synth.hpp"

namespace kstroke {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::string input;
  std::string out = "out";
  std::uint64_t seed = 0;

  std::size_t window = 1000;
  std::size_t overlap = 300;
  std::string kit = "press-press";
  std::string exclude = "siamese";
  std::size_t budget = 100;
  std::string vocab_mode = "combined";
  std::string aggregation = "mean";
  std::string model = "gbdt";
  bool grid_search = false;
  std::size_t seq_len = 50;
  std::size_t hidden = 16;
  int epochs = 20;

  std::string scenario = "user-agnostic";
  std::vector<std::string> holdout;
  std::vector<std::string> train_datasets;
  bool pooled = false;

  std::string mode = "at-p";
  double ratio = 1.0;
  std::size_t backspace_gap = 6;
  double backspace_prob = 0.8;

  std::size_t users = 30;
  std::size_t sessions = 4;
  std::size_t chars = 600;
  std::vector<std::string> regimes = {"bona-fide", "transcribed"};
  std::string dataset = "synth";
  std::string prior;
  double interval_mult = 1.0;
  double dwell_mult = 1.0;

  std::string format = "canonical";
  bool out_given = false;
};

// Flag values parsed into library types. Parse failures are usage errors.
struct Resolved {
  PipelineConfig pipeline;
  ScenarioSpec scenario;
  AttackConfig attack;
  std::vector<RegimeSpec> regimes;
};

class Log {
 public:
  Log(std::ostream& err, std::string command) : err_(err), command_(std::move(command)) {}

  void operator()(std::string_view level, std::string_view msg,
                  const std::vector<std::pair<std::string, std::string>>& kv = {}) const {
    err_ << "level=" << level << " cmd=" << command_ << " msg=" << quote(msg);
    for (const auto& [k, v] : kv) err_ << ' ' << k << '=' << quote(v);
    err_ << '\n';
  }

 private:
  static std::string quote(std::string_view v) {
    if (!v.empty() && v.find_first_of(" \"=") == std::string_view::npos) return std::string(v);
    std::string q = "\"";
    for (char c : v) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    return q + '"';
  }

  std::ostream& err_;
  std::string command_;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

template <class F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

Resolved resolve(const Options& o) {
  Resolved r;
  PipelineConfig& p = r.pipeline;
  p.seed = o.seed;
  p.segment.window_size = o.window;
  p.segment.overlap = o.overlap;
  if (o.window == 0 || o.overlap >= o.window) {
    throw UsageError("--overlap must be smaller than --window");
  }
  p.features.kit = as_usage([&] { return parse_kit_variant(o.kit); });
  if (o.exclude != "none" && o.exclude != "siamese" && o.exclude != "gbdt" && o.exclude != "all") {
    throw UsageError("--exclude must be none, siamese, gbdt or all");
  }
  p.exclude_gbdt_windows = o.exclude == "gbdt" || o.exclude == "all";
  p.exclude_siamese_windows = o.exclude == "siamese" || o.exclude == "all";
  p.budget = o.budget;
  if (o.vocab_mode == "combined") {
    p.vocab_mode = VocabBudget::Combined;
  } else if (o.vocab_mode == "per-kind") {
    p.vocab_mode = VocabBudget::PerKind;
  } else {
    throw UsageError("--vocab-mode must be combined or per-kind");
  }
  p.aggregation = as_usage([&] { return parse_aggregation(o.aggregation); });
  p.model = as_usage([&] { return parse_model_kind(o.model); });
  p.grid_search = o.grid_search;
  p.siamese.M = o.seq_len;
  p.siamese.hidden_dim = o.hidden;
  p.siamese.epochs = o.epochs;
  as_usage([&] {
    p.siamese.validate();
    return 0;
  });

  r.scenario.family = as_usage([&] { return parse_scenario(o.scenario); });
  r.scenario.holdout = o.holdout;
  r.scenario.train_groups = o.train_datasets;
  r.scenario.seed = derive_seed(o.seed, 31);
  r.scenario.per_group = !o.pooled;

  r.attack.mode = as_usage([&] { return parse_attack_mode(o.mode); });
  r.attack.backspace_gap = o.backspace_gap;
  r.attack.backspace_prob = o.backspace_prob;
  as_usage([&] {
    r.attack.validate();
    return 0;
  });
  if (o.ratio < 0) throw UsageError("--ratio must be non-negative");

  for (const std::string& name : o.regimes) {
    r.regimes.push_back(RegimeSpec::defaults(as_usage([&] { return parse_mode(name); })));
  }
  return r;
}

json options_json(const Options& o) {
  return json{{"input", o.input},
              {"out", o.out},
              {"seed", o.seed},
              {"window", o.window},
              {"overlap", o.overlap},
              {"kit_variant", o.kit},
              {"exclude", o.exclude},
              {"budget", o.budget},
              {"vocab_mode", o.vocab_mode},
              {"aggregation", o.aggregation},
              {"model", o.model},
              {"grid_search", o.grid_search},
              {"seq_len", o.seq_len},
              {"hidden", o.hidden},
              {"epochs", o.epochs},
              {"scenario", o.scenario},
              {"holdout", o.holdout},
              {"train_datasets", o.train_datasets},
              {"pooled", o.pooled},
              {"mode", o.mode},
              {"ratio", o.ratio},
              {"backspace_gap", o.backspace_gap},
              {"backspace_prob", o.backspace_prob},
              {"users", o.users},
              {"sessions", o.sessions},
              {"chars", o.chars},
              {"regimes", o.regimes},
              {"dataset", o.dataset},
              {"prior", o.prior},
              {"interval_mult", o.interval_mult},
              {"dwell_mult", o.dwell_mult},
              {"format", o.format}};
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

void write_summary(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string head, row;
  for (const auto& [k, v] : kv) {
    head += (head.empty() ? "" : ",") + k;
    row += (row.empty() ? "" : ",") + v;
  }
  write_file_atomic(dir / "summary.csv", head + "\n" + row + "\n");
}

void write_run_config(const fs::path& dir, const Options& o, const Resolved& r) {
  write_json(dir / "run_config.json",
             json{{"subcommand", o.command},
                  {"flags", options_json(o)},
                  {"pipeline", to_json(r.pipeline)}});
}

void write_corpus(const fs::path& path, std::span<const Session> sessions) {
  std::string text;
  for (const Session& s : sessions) text += serialize_canonical(s) + "\n";
  write_file_atomic(path, text);
}

std::vector<Session> load_corpus(const fs::path& input, const Log& log) {
  fs::path path = input;
  if (fs::is_directory(path)) path /= "corpus.jsonl";
  if (!fs::exists(path)) throw ConfigError("no corpus at " + path.string());
  ParseResult parsed = parse_canonical_file(path);
  if (parsed.dropped_events > 0) {
    log("warn", "dropped invalid events", {{"count", std::to_string(parsed.dropped_events)}});
  }
  log("info", "loaded corpus", {{"path", path.string()},
                                {"sessions", std::to_string(parsed.sessions.size())}});
  return std::move(parsed.sessions);
}

std::vector<Session> synth_corpus(const Options& o, const Resolved& r, bool two_datasets) {
  CorpusOptions copt;
  copt.dataset = two_datasets ? "A" : o.dataset;
  if (!o.prior.empty()) copt.prior = PopulationPrior::load(o.prior);
  copt.dataset_dwell_mult = o.dwell_mult;
  copt.dataset_interval_mult = o.interval_mult;
  std::vector<Session> corpus =
      generate_corpus(o.users, o.sessions, o.chars, r.regimes, derive_seed(o.seed, 101), copt);
  if (two_datasets) {
    // Second dataset with its own regime mix and a tempo shift, so that
    // cross-dataset scenarios have something to measure.
    CorpusOptions bopt = copt;
    bopt.dataset = "B";
    bopt.user_prefix = "b";
    bopt.dataset_interval_mult = o.interval_mult * 1.15;
    const std::vector<RegimeSpec> regimes = {RegimeSpec::defaults(Mode::BonaFide),
                                             RegimeSpec::defaults(Mode::Paraphrased)};
    const std::size_t users = std::max<std::size_t>(2, o.users * 2 / 5);
    std::vector<Session> b =
        generate_corpus(users, o.sessions, o.chars, regimes, derive_seed(o.seed, 102), bopt);
    corpus.insert(corpus.end(), b.begin(), b.end());
  }
  return corpus;
}

bool dataset_family(ScenarioFamily f) {
  return f == ScenarioFamily::DatasetSpecific || f == ScenarioFamily::DatasetAgnostic;
}

// Corpus from --input, else a seeded synthetic corpus saved to --out.
std::vector<Session> input_corpus(const Options& o, const Resolved& r, const fs::path& out,
                                  const Log& log) {
  if (!o.input.empty()) return load_corpus(o.input, log);
  std::vector<Session> corpus = synth_corpus(o, r, dataset_family(r.scenario.family));
  write_corpus(out / "corpus.jsonl", corpus);
  log("info", "generated synthetic corpus", {{"sessions", std::to_string(corpus.size())}});
  return corpus;
}

json manifest_json(const SplitManifest& m) {
  return json{{"family", std::string(to_string(m.family))},
              {"train", m.train},
              {"test", m.test},
              {"train_groups", m.train_group_keys},
              {"test_groups", m.test_group_keys}};
}

Metrics clean_metrics(const Detector& det, std::span<const Session> test) {
  std::vector<ScoredLabel> scored;
  scored.reserve(test.size());
  for (const Session& s : test) scored.push_back({det.score(s), s.label().is_assisted});
  return metrics(scored, det.threshold());
}

std::shared_ptr<const LexiconSet> lexicon() {
  return std::make_shared<const LexiconSet>(LexiconSet::load_default());
}

// ---- subcommands ------------------------------------------------------------

int cmd_synth(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
              const Log& log) {
  std::vector<Session> corpus = synth_corpus(o, r, false);
  write_corpus(out / "corpus.jsonl", corpus);
  std::size_t events = 0;
  for (const Session& s : corpus) events += s.events.size();
  write_summary(out, {{"sessions", std::to_string(corpus.size())},
                      {"users", std::to_string(o.users)},
                      {"events", std::to_string(events)}});
  log("info", "wrote corpus", {{"sessions", std::to_string(corpus.size())}});
  cout << "sessions=" << corpus.size() << " events=" << events << "\n";
  return 0;
}

int cmd_ingest(const Options& o, const fs::path& out, std::ostream& cout, const Log& log) {
  if (o.input.empty()) throw UsageError("ingest needs --input");
  std::vector<Session> sessions;
  std::size_t dropped = 0;
  if (o.format == "canonical") {
    ParseResult parsed = parse_canonical_file(o.input);
    sessions = std::move(parsed.sessions);
    dropped = parsed.dropped_events;
  } else {
    const ExternalFormat fmt = as_usage([&] { return parse_external_format(o.format); });
    sessions = adapt_external(o.input, fmt, &dropped);
  }
  if (dropped > 0) log("warn", "dropped invalid events", {{"count", std::to_string(dropped)}});
  write_corpus(out / "corpus.jsonl", sessions);
  write_summary(out, {{"sessions", std::to_string(sessions.size())},
                      {"dropped_events", std::to_string(dropped)}});
  cout << "sessions=" << sessions.size() << " dropped_events=" << dropped << "\n";
  return 0;
}

int cmd_segment(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
                const Log& log) {
  std::vector<Session> corpus = input_corpus(o, r, out, log);
  std::string csv = "session_key,user_id,start_index,n_events,assisted\n";
  std::size_t n_windows = 0, short_sessions = 0;
  for (const Session& s : corpus) {
    std::vector<Window> ws = segment(s, r.pipeline.segment);
    if (ws.empty()) ++short_sessions;
    for (const Window& w : ws) {
      csv += w.session_key + "," + w.user_id + "," + std::to_string(w.start_index) + "," +
             std::to_string(w.events.size()) + "," + (w.label.is_assisted ? "1" : "0") + "\n";
      ++n_windows;
    }
  }
  write_file_atomic(out / "windows.csv", csv);
  write_summary(out, {{"sessions", std::to_string(corpus.size())},
                      {"windows", std::to_string(n_windows)},
                      {"short_sessions", std::to_string(short_sessions)}});
  if (short_sessions > 0) {
    log("warn", "sessions shorter than the minimum tail",
        {{"count", std::to_string(short_sessions)}});
  }
  cout << "windows=" << n_windows << " short_sessions=" << short_sessions << "\n";
  return 0;
}

int cmd_featurize(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
                  const Log& log) {
  std::vector<Session> corpus = input_corpus(o, r, out, log);
  std::vector<Window> windows;
  for (const Session& s : corpus) {
    std::vector<Window> ws = scoring_windows(s, r.pipeline.segment, r.pipeline.exclude_gbdt_windows);
    windows.insert(windows.end(), ws.begin(), ws.end());
  }
  const FeatureVocabulary vocab = build_vocabulary(windows, o.budget, r.pipeline.vocab_mode);
  const auto lex = lexicon();
  std::string csv = "session_key,start_index,assisted";
  for (const std::string& name : feature_names(vocab)) csv += "," + name;
  csv += "\n";
  for (const Window& w : windows) {
    const FeatureVector fv = featurize(w, vocab, *lex, r.pipeline.features);
    csv += w.session_key + "," + std::to_string(w.start_index) + "," +
           (w.label.is_assisted ? "1" : "0");
    for (double v : fv.values) csv += "," + (std::isnan(v) ? std::string() : num(v));
    csv += "\n";
  }
  const std::string fp = corpus_fingerprint(corpus);
  save_vocab(out / "vocab.artifact", vocab, fp);
  write_file_atomic(out / "features.csv", csv);
  write_summary(out, {{"windows", std::to_string(windows.size())},
                      {"vocabulary", std::to_string(vocab.items.size())},
                      {"features", std::to_string(vocab.items.size() + 12)}});
  log("info", "wrote features", {{"windows", std::to_string(windows.size())}});
  cout << "windows=" << windows.size() << " vocabulary=" << vocab.items.size() << "\n";
  return 0;
}

void save_detector(const Detector& det, const fs::path& out, const std::string& fp) {
  if (const auto* g = dynamic_cast<const GbdtDetector*>(&det)) {
    save_vocab(out / "vocab.artifact", g->vocabulary(), fp);
    save_gbdt(out / "gbdt.artifact", g->model(), fp);
  } else if (const auto* s = dynamic_cast<const SiameseDetector*>(&det)) {
    save_siamese(out / "siamese.artifact", s->model(), s->references(), fp);
  }
}

int cmd_train(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
              const Log& log) {
  std::vector<Session> corpus = input_corpus(o, r, out, log);
  auto det = train_detector(corpus, r.pipeline, lexicon());
  save_detector(*det, out, corpus_fingerprint(corpus));
  const Metrics m = clean_metrics(*det, corpus);
  write_json(out / "detector.json", json{{"model", o.model},
                                         {"threshold", det->threshold()},
                                         {"train_sessions", corpus.size()},
                                         {"train_accuracy", m.accuracy}});
  write_summary(out, {{"model", o.model},
                      {"train_sessions", std::to_string(corpus.size())},
                      {"threshold", num(det->threshold())},
                      {"train_accuracy", num(m.accuracy)}});
  log("info", "trained detector", {{"model", o.model}, {"train_accuracy", num(m.accuracy)}});
  cout << "model=" << o.model << " train_accuracy=" << num(m.accuracy) << "\n";
  return 0;
}

std::vector<std::pair<std::string, std::string>> report_summary(const EvalReport& rep) {
  return {{"scenario", rep.scenario},
          {"model", rep.model},
          {"f1", num(rep.f1)},
          {"far", num(rep.far)},
          {"frr", num(rep.frr)},
          {"accuracy", num(rep.accuracy)},
          {"eer", num(rep.eer)},
          {"threshold", num(rep.threshold)},
          {"n_test", std::to_string(rep.scores.size())},
          {"degenerate", rep.degenerate ? "1" : "0"}};
}

int cmd_eval(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
             const Log& log) {
  std::vector<Session> corpus = input_corpus(o, r, out, log);
  if (!o.input.empty()) write_corpus(out / "corpus.jsonl", corpus);
  const EvalReport rep = run_scenario(r.pipeline, corpus, r.scenario, lexicon());
  const std::string fp = corpus_fingerprint(corpus);
  save_report(out / "report.artifact", rep, fp);
  write_json(out / "manifest.json", manifest_json(rep.manifest));
  std::string csv = "session_key,score,assisted\n";
  for (const ScoredSession& s : rep.scores) {
    csv += s.key + "," + num(s.score) + "," + (s.assisted ? "1" : "0") + "\n";
  }
  write_file_atomic(out / "scores.csv", csv);
  write_summary(out, report_summary(rep));
  if (rep.degenerate) log("warn", "degenerate metrics: a denominator was zero");
  log("info", "evaluated", {{"scenario", rep.scenario}, {"f1", num(rep.f1)}});
  cout << "scenario=" << rep.scenario << " model=" << rep.model << " f1=" << num(rep.f1)
       << " far=" << num(rep.far) << " frr=" << num(rep.frr) << " eer=" << num(rep.eer)
       << "\n";
  return 0;
}

// Train/test sessions for attack runs: the corpus and manifest of an earlier
// eval run when present, else a fresh user-agnostic split.
struct AttackData {
  std::vector<Session> corpus;
  std::vector<Session> train;
  std::vector<Session> test;
};

AttackData attack_data(const Options& o, const Resolved& r, const fs::path& out, const Log& log) {
  AttackData d;
  const fs::path src = o.input.empty() ? out : fs::path(o.input);
  if (fs::is_directory(src) && fs::exists(src / "corpus.jsonl") &&
      fs::exists(src / "manifest.json")) {
    d.corpus = load_corpus(src / "corpus.jsonl", log);
    std::ifstream in(src / "manifest.json");
    json m;
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad manifest.json: ") + e.what());
    }
    const auto train_keys = m.at("train").get<std::vector<std::string>>();
    const auto test_keys = m.at("test").get<std::vector<std::string>>();
    d.train = select_sessions(d.corpus, train_keys);
    d.test = select_sessions(d.corpus, test_keys);
    log("info", "reusing eval split", {{"dir", src.string()}});
  } else {
    Options fresh = o;
    fresh.input = (fs::exists(src) && !fs::is_directory(src)) ? src.string() : "";
    d.corpus = input_corpus(fresh, r, out, log);
    ScenarioSpec spec = r.scenario;
    spec.family = ScenarioFamily::UserAgnostic;
    const SplitManifest m = make_split(d.corpus, spec);
    d.train = select_sessions(d.corpus, m.train);
    d.test = select_sessions(d.corpus, m.test);
    write_corpus(out / "corpus.jsonl", d.corpus);
    write_json(out / "manifest.json", manifest_json(m));
  }
  return d;
}

// At-P draws on training users only. At-U also sees the bona fide logs of
// the targeted test users, which is what that attacker is assumed to hold.
TimingDictionary attacker_dictionary(const AttackData& d, const Resolved& r) {
  std::vector<Session> pool = d.train;
  if (r.attack.mode == AttackMode::AtU) {
    for (const Session& s : d.test) {
      if (!s.label().is_assisted) pool.push_back(s);
    }
  }
  return build_dictionary(pool, r.pipeline.features.kit);
}

// One forgery per assisted test response, typed as its text.
std::vector<Session> forge_test_set(const AttackData& d, const TimingDictionary& dict,
                                    const Resolved& r, std::uint64_t seed) {
  std::vector<Session> forged;
  std::uint64_t i = 0;
  for (const Session& s : d.test) {
    if (!s.label().is_assisted) continue;
    AttackConfig c = r.attack;
    c.seed = derive_seed(seed, 1000 + i);
    std::optional<std::string> user;
    if (c.mode == AttackMode::AtU) user = s.user_id;
    ForgedSequence f = forge(session_text(s), dict, user, c);
    forged.push_back(to_session(f, s.user_id, "forged-" + std::to_string(i), s.dataset));
    ++i;
  }
  if (forged.empty()) throw ConfigError("test split has no assisted responses to forge");
  return forged;
}

int cmd_attack(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
               const Log& log) {
  const AttackData d = attack_data(o, r, out, log);
  const auto lex = lexicon();
  auto det = train_detector(d.train, r.pipeline, lex);
  const TimingDictionary dict = attacker_dictionary(d, r);
  const std::vector<Session> forged = forge_test_set(d, dict, r, o.seed);
  const double asr = attack_success_rate(*det, forged);
  const Metrics clean = clean_metrics(*det, d.test);

  const std::string fp = corpus_fingerprint(d.corpus);
  save_timing_dictionary(out / "timing-dict.artifact", dict, fp);
  save_detector(*det, out, fp);
  write_corpus(out / "forged.jsonl", forged);
  write_json(out / "attack.json", json{{"mode", o.mode},
                                       {"model", o.model},
                                       {"n_forged", forged.size()},
                                       {"asr", asr},
                                       // Same quantity, under the name attack studies often use.
                                       {"attack_frr", asr},
                                       {"clean_accuracy", clean.accuracy},
                                       {"clean_f1", clean.f1}});
  write_summary(out, {{"mode", o.mode},
                      {"model", o.model},
                      {"n_forged", std::to_string(forged.size())},
                      {"asr", num(asr)},
                      {"clean_accuracy", num(clean.accuracy)}});
  log("info", "attack evaluated", {{"mode", o.mode}, {"asr", num(asr)}});
  cout << "mode=" << o.mode << " n_forged=" << forged.size() << " asr=" << num(asr) << "\n";
  return 0;
}

int cmd_advtrain(const Options& o, const Resolved& r, const fs::path& out, std::ostream& cout,
                 const Log& log) {
  const AttackData d = attack_data(o, r, out, log);
  const auto lex = lexicon();
  auto before = train_detector(d.train, r.pipeline, lex);
  const TimingDictionary dict = attacker_dictionary(d, r);
  const std::vector<Session> forged = forge_test_set(d, dict, r, o.seed);

  // Augmentation uses a disjoint seed stream and training texts, so the
  // evaluation forgeries stay held out.
  AttackConfig aug = r.attack;
  aug.seed = derive_seed(o.seed, 5000);
  const TimingDictionary train_dict = build_dictionary(d.train, r.pipeline.features.kit);
  const std::vector<Session> augmented = adversarial_augment(d.train, train_dict, aug, o.ratio);
  auto after = train_detector(augmented, r.pipeline, lex);

  const double asr_before = attack_success_rate(*before, forged);
  const double asr_after = attack_success_rate(*after, forged);
  const Metrics clean_before = clean_metrics(*before, d.test);
  const Metrics clean_after = clean_metrics(*after, d.test);

  const std::string fp = corpus_fingerprint(d.corpus);
  save_timing_dictionary(out / "timing-dict.artifact", train_dict, fp);
  save_detector(*after, out, fp);
  write_json(out / "advtrain.json", json{{"mode", o.mode},
                                         {"model", o.model},
                                         {"ratio", o.ratio},
                                         {"n_augmented", augmented.size() - d.train.size()},
                                         {"n_forged", forged.size()},
                                         {"asr_before", asr_before},
                                         {"asr_after", asr_after},
                                         {"attack_frr_before", asr_before},
                                         {"attack_frr_after", asr_after},
                                         {"clean_accuracy_before", clean_before.accuracy},
                                         {"clean_accuracy_after", clean_after.accuracy}});
  write_summary(out, {{"mode", o.mode},
                      {"model", o.model},
                      {"ratio", num(o.ratio)},
                      {"asr_before", num(asr_before)},
                      {"asr_after", num(asr_after)},
                      {"clean_accuracy_before", num(clean_before.accuracy)},
                      {"clean_accuracy_after", num(clean_after.accuracy)}});
  log("info", "adversarial retraining evaluated",
      {{"asr_before", num(asr_before)}, {"asr_after", num(asr_after)}});
  cout << "asr_before=" << num(asr_before) << " asr_after=" << num(asr_after)
       << " clean_accuracy_after=" << num(clean_after.accuracy) << "\n";
  return 0;
}

int cmd_report(const Options& o, std::ostream& cout, const Log& log) {
  if (o.input.empty()) throw UsageError("report needs --input (report artifact or eval dir)");
  fs::path path = o.input;
  if (fs::is_directory(path)) path /= "report.artifact";
  const EvalReport rep = load_report(path);
  std::string csv = "group,f1,far,frr,accuracy,eer,threshold,n_test\n";
  csv += "all," + num(rep.f1) + "," + num(rep.far) + "," + num(rep.frr) + "," +
         num(rep.accuracy) + "," + num(rep.eer) + "," + num(rep.threshold) + "," +
         std::to_string(rep.scores.size()) + "\n";
  for (const GroupReport& g : rep.groups) {
    csv += g.group + "," + num(g.metrics.f1) + "," + num(g.metrics.far) + "," +
           num(g.metrics.frr) + "," + num(g.metrics.accuracy) + "," + num(g.eer) + "," +
           num(g.threshold) + "," + std::to_string(g.n_test) + "\n";
  }
  cout << "scenario=" << rep.scenario << " model=" << rep.model << "\n" << csv;
  if (o.out_given) {
    write_file_atomic(fs::path(o.out) / "report.csv", csv);
    write_summary(o.out, report_summary(rep));
  }
  log("info", "report", {{"path", path.string()}});
  return 0;
}

// ---- argument parsing ----------------------------------------------------------

void add_io(CLI::App* sub, Options& o, bool input_required) {
  auto* in = sub->add_option("--input", o.input, "input path");
  if (input_required) in->required();
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--seed", o.seed, "master seed")->capture_default_str();
}

void add_segment(CLI::App* sub, Options& o) {
  sub->add_option("--window", o.window, "window size W (events)")->capture_default_str();
  sub->add_option("--overlap", o.overlap, "overlap V (events)")->capture_default_str();
  sub->add_option("--exclude", o.exclude,
                  "paths applying Shift/length window exclusion: none, siamese, gbdt, all")
      ->capture_default_str();
}

void add_features(CLI::App* sub, Options& o) {
  sub->add_option("--kit-variant", o.kit, "press-press or release-press")->capture_default_str();
  sub->add_option("--budget", o.budget, "timing vocabulary budget")->capture_default_str();
  sub->add_option("--vocab-mode", o.vocab_mode, "combined or per-kind")->capture_default_str();
}

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "gbdt or siamese")->capture_default_str();
  sub->add_option("--aggregation", o.aggregation, "mean or majority")->capture_default_str();
  sub->add_flag("--grid-search", o.grid_search, "cross-validated GBDT grid search");
  sub->add_option("--seq-len", o.seq_len, "Siamese sequence length M")->capture_default_str();
  sub->add_option("--hidden", o.hidden, "Siamese hidden size")->capture_default_str();
  sub->add_option("--epochs", o.epochs, "Siamese epochs")->capture_default_str();
}

void add_synth(CLI::App* sub, Options& o) {
  sub->add_option("--users", o.users, "synthetic users")->capture_default_str();
  sub->add_option("--sessions", o.sessions, "sessions per user and regime")
      ->capture_default_str();
  sub->add_option("--chars", o.chars, "characters per session (>= 300)")->capture_default_str();
  sub->add_option("--regimes", o.regimes, "writing modes to simulate")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--dataset", o.dataset, "dataset tag")->capture_default_str();
  sub->add_option("--prior", o.prior, "population prior JSON");
  sub->add_option("--interval-mult", o.interval_mult, "dataset interval shift")
      ->capture_default_str();
  sub->add_option("--dwell-mult", o.dwell_mult, "dataset dwell shift")->capture_default_str();
}

void add_scenario(CLI::App* sub, Options& o) {
  sub->add_option("--scenario", o.scenario, "evaluation scenario")->capture_default_str();
  sub->add_option("--holdout", o.holdout, "held-out group tags")->delimiter(',');
  sub->add_option("--train-datasets", o.train_datasets, "training datasets")->delimiter(',');
  sub->add_flag("--pooled", o.pooled, "one detector across groups for specific scenarios");
}

void add_attack(CLI::App* sub, Options& o) {
  sub->add_option("--mode", o.mode, "at-u or at-p")->capture_default_str();
  sub->add_option("--backspace-gap", o.backspace_gap, "keys between backspace opportunities")
      ->capture_default_str();
  sub->add_option("--backspace-prob", o.backspace_prob, "backspace probability")
      ->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Keystroke-integrity toolkit: detect assisted typing, forge keystrokes, "
               "harden detectors.",
               "kstroke"};
  app.require_subcommand(1, 1);

  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic corpus");
  add_io(synth, o, false);
  add_synth(synth, o);

  auto* ingest = app.add_subcommand("ingest", "validate logs into the canonical format");
  add_io(ingest, o, true);
  ingest->add_option("--format", o.format, "canonical, sbu, buffalo or iiitd")
      ->capture_default_str();

  auto* seg = app.add_subcommand("segment", "cut sessions into windows");
  add_io(seg, o, false);
  add_segment(seg, o);
  add_synth(seg, o);

  auto* feat = app.add_subcommand("featurize", "build the vocabulary and feature matrix");
  add_io(feat, o, false);
  add_segment(feat, o);
  add_features(feat, o);
  add_synth(feat, o);

  auto* train = app.add_subcommand("train", "train a detector on a whole corpus");
  add_io(train, o, false);
  add_segment(train, o);
  add_features(train, o);
  add_model(train, o);
  add_synth(train, o);

  auto* eval = app.add_subcommand("eval", "train and test one scenario split");
  add_io(eval, o, false);
  add_segment(eval, o);
  add_features(eval, o);
  add_model(eval, o);
  add_scenario(eval, o);
  add_synth(eval, o);

  auto* attack = app.add_subcommand("attack", "forge assisted responses against a detector");
  add_io(attack, o, false);
  add_segment(attack, o);
  add_features(attack, o);
  add_model(attack, o);
  add_attack(attack, o);
  add_synth(attack, o);

  auto* adv = app.add_subcommand("advtrain", "augment with forgeries, retrain and re-attack");
  add_io(adv, o, false);
  add_segment(adv, o);
  add_features(adv, o);
  add_model(adv, o);
  add_attack(adv, o);
  add_synth(adv, o);
  adv->add_option("--ratio", o.ratio, "forgeries per bona fide training session")
      ->capture_default_str();

  auto* report = app.add_subcommand("report", "summarize a report artifact");
  report->add_option("--input", o.input, "report artifact or eval directory")->required();
  report->add_option("--out", o.out, "also write report.csv here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  o.command = sub->get_name();
  if (auto* opt = sub->get_option_no_throw("--out"); opt && opt->count() > 0) o.out_given = true;
  Log log(err, o.command);

  Resolved r;
  try {
    r = resolve(o);
    if (o.command != "ingest" && o.command != "report" && o.input.empty() && o.chars < 300) {
      throw UsageError("--chars must be at least 300");
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return 2;
  }

  try {
    const fs::path outdir = o.out;
    if (o.command != "report") {
      fs::create_directories(outdir);
      write_run_config(outdir, o, r);
    }
    log("info", "start", {{"seed", std::to_string(o.seed)}});
    if (o.command == "synth") return cmd_synth(o, r, outdir, out, log);
    if (o.command == "ingest") return cmd_ingest(o, outdir, out, log);
    if (o.command == "segment") return cmd_segment(o, r, outdir, out, log);
    if (o.command == "featurize") return cmd_featurize(o, r, outdir, out, log);
    if (o.command == "train") return cmd_train(o, r, outdir, out, log);
    if (o.command == "eval") return cmd_eval(o, r, outdir, out, log);
    if (o.command == "attack") return cmd_attack(o, r, outdir, out, log);
    if (o.command == "advtrain") return cmd_advtrain(o, r, outdir, out, log);
    if (o.command == "report") return cmd_report(o, out, log);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return 2;
  } catch (const Error& e) {
    log("error", e.what());
    return 1;
  } catch (const std::exception& e) {
    log("error", e.what());
    return 1;
  }
  return 1;
}

}  // namespace kstroke
