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

#include "kstroke/persistence.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include "kstroke/errors.hpp"
#include "kstroke/random.hpp"

namespace kstroke {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "%kstroke-artifact\n";
constexpr std::string_view kBodyMarker = "%body\n";
constexpr std::string_view kCrcPrefix = "%crc32=";

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in chunks.
  const auto* data = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(left, 1U << 30));
    crc = crc32(crc, data, n);
    data += n;
    left -= n;
  }
  return static_cast<std::uint32_t>(crc);
}

json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double get_num(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw FormatError("expected a number, found string '" + s + "'");
  }
  if (!j.is_number()) throw FormatError("expected a number");
  return j.get<double>();
}

template <typename F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string("artifact body: ") + e.what());
  }
}

json matrix_json(const double* data, long rows, long cols) {
  json d = json::array();
  for (long i = 0; i < rows * cols; ++i) d.push_back(data[i]);
  return {{"rows", rows}, {"cols", cols}, {"data", std::move(d)}};
}

json to_json(const Metrics& m) {
  return {{"tp", m.counts.tp},          {"fp", m.counts.fp},   {"tn", m.counts.tn},
          {"fn", m.counts.fn},          {"precision", num(m.precision)}, {"recall", num(m.recall)},
          {"f1", num(m.f1)},            {"far", num(m.far)},   {"frr", num(m.frr)},
          {"accuracy", num(m.accuracy)},     {"degenerate", m.degenerate}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
              j.at("tn").get<std::size_t>(), j.at("fn").get<std::size_t>()};
  m.precision = get_num(j.at("precision"));
  m.recall = get_num(j.at("recall"));
  m.f1 = get_num(j.at("f1"));
  m.far = get_num(j.at("far"));
  m.frr = get_num(j.at("frr"));
  m.accuracy = get_num(j.at("accuracy"));
  m.degenerate = j.at("degenerate").get<bool>();
  return m;
}

json stat_json(const TimingStat& s) { return json::array({s.mean, s.sd, s.n}); }

TimingStat stat_from_json(const json& j) {
  return {get_num(j.at(0)), get_num(j.at(1)), j.at(2).get<std::size_t>()};
}

json table_json(const TimingTable& t) {
  json kht = json::array(), kit = json::array();
  for (const auto& [k, s] : t.kht) kht.push_back({k, s.mean, s.sd, s.n});
  for (const auto& [k, s] : t.kit) kit.push_back({k.first, k.second, s.mean, s.sd, s.n});
  return {{"kht", kht}, {"kit", kit}};
}

TimingTable table_from_json(const json& j) {
  TimingTable t;
  for (const json& e : j.at("kht")) {
    t.kht[e.at(0).get<int>()] = {get_num(e.at(1)), get_num(e.at(2)), e.at(3).get<std::size_t>()};
  }
  for (const json& e : j.at("kit")) {
    t.kit[{e.at(0).get<int>(), e.at(1).get<int>()}] = {get_num(e.at(2)), get_num(e.at(3)),
                                                       e.at(4).get<std::size_t>()};
  }
  return t;
}

json seq_json(const SeqSample& s) {
  json t = json::array();
  const std::size_t n = s.valid_length();
  for (std::size_t i = 0; i < n; ++i) t.push_back({s.triplets[i][0], s.triplets[i][1], s.triplets[i][2]});
  return {{"length", s.triplets.size()}, {"assisted", s.label.is_assisted}, {"events", t}};
}

SeqSample seq_from_json(const json& j) {
  SeqSample s;
  const auto M = j.at("length").get<std::size_t>();
  s.label.is_assisted = j.at("assisted").get<bool>();
  s.triplets.assign(M, {0.0, 0.0, 0.0});
  s.mask.assign(M, false);
  const json& ev = j.at("events");
  if (ev.size() > M) throw FormatError("reference sequence longer than its declared length");
  for (std::size_t i = 0; i < ev.size(); ++i) {
    s.triplets[i] = {get_num(ev[i].at(0)), get_num(ev[i].at(1)), get_num(ev[i].at(2))};
    s.mask[i] = true;
  }
  return s;
}

}  // namespace

std::string_view to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::Vocab: return "vocab";
    case ArtifactKind::Gbdt: return "gbdt";
    case ArtifactKind::Siamese: return "siamese";
    case ArtifactKind::TimingDict: return "timing-dict";
    case ArtifactKind::Report: return "report";
  }
  return "vocab";
}

ArtifactKind parse_artifact_kind(std::string_view text) {
  for (ArtifactKind k : {ArtifactKind::Vocab, ArtifactKind::Gbdt, ArtifactKind::Siamese,
                         ArtifactKind::TimingDict, ArtifactKind::Report}) {
    if (to_string(k) == text) return k;
  }
  throw FormatError("unknown artifact kind '" + std::string(text) + "'");
}

std::string creation_time() {
  std::time_t t = std::time(nullptr);
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0' && v >= 0) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string encode_artifact(const ArtifactHeader& header, const json& body) {
  std::string out(kMagic);
  out += "kind=" + std::string(to_string(header.kind)) + "\n";
  out += "format_version=" + std::to_string(header.format_version) + "\n";
  out += "created=" + header.created + "\n";
  out += "corpus_fingerprint=" + header.corpus_fingerprint + "\n";
  out += kBodyMarker;
  out += body.dump(1);
  out += "\n";
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", crc_of(out));
  out += kCrcPrefix;
  out += crc;
  out += "\n";
  return out;
}

Artifact decode_artifact(std::string_view text, std::optional<ArtifactKind> expected) {
  // Checksum line: the last line, terminated by a newline.
  if (text.empty() || text.back() != '\n') throw ChecksumError("artifact truncated: no checksum line");
  const std::size_t line_start = text.rfind('\n', text.size() - 2);
  const std::size_t crc_pos = line_start == std::string_view::npos ? 0 : line_start + 1;
  const std::string_view crc_line = text.substr(crc_pos, text.size() - 1 - crc_pos);
  if (!crc_line.starts_with(kCrcPrefix)) throw ChecksumError("artifact truncated: no checksum line");
  const std::string hex(crc_line.substr(kCrcPrefix.size()));
  char* end = nullptr;
  const unsigned long stored = std::strtoul(hex.c_str(), &end, 16);
  if (hex.size() != 8 || *end != '\0') throw ChecksumError("malformed checksum line");
  const std::string_view covered = text.substr(0, crc_pos);
  if (crc_of(covered) != stored) throw ChecksumError("checksum mismatch: artifact is corrupted");

  if (!covered.starts_with(kMagic)) throw FormatError("not a kstroke artifact");
  const std::size_t body_pos = covered.find(kBodyMarker);
  if (body_pos == std::string_view::npos) throw FormatError("artifact has no body marker");

  std::map<std::string, std::string> fields;
  std::istringstream hs(std::string(covered.substr(kMagic.size(), body_pos - kMagic.size())));
  std::string line;
  while (std::getline(hs, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header line '" + line + "'");
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"kind", "format_version", "created", "corpus_fingerprint"}) {
    if (!fields.contains(key)) throw FormatError(std::string("header lacks ") + key);
  }

  Artifact a;
  try {
    a.header.format_version = std::stoi(fields["format_version"]);
  } catch (const std::exception&) {
    throw FormatError("format_version is not an integer");
  }
  if (a.header.format_version != kFormatVersion) {
    throw VersionError("unsupported format_version " + std::to_string(a.header.format_version) +
                       " (this build reads " + std::to_string(kFormatVersion) + ")");
  }
  a.header.kind = parse_artifact_kind(fields["kind"]);
  if (expected && *expected != a.header.kind) {
    throw KindMismatchError("expected a " + std::string(to_string(*expected)) +
                            " artifact, found " + std::string(to_string(a.header.kind)));
  }
  a.header.created = fields["created"];
  a.header.corpus_fingerprint = fields["corpus_fingerprint"];
  try {
    a.body = json::parse(covered.substr(body_pos + kBodyMarker.size()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("artifact body: ") + e.what());
  }
  return a;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PersistenceError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw PersistenceError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw PersistenceError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

void write_artifact(const std::filesystem::path& path, const ArtifactHeader& header,
                    const json& body) {
  write_file_atomic(path, encode_artifact(header, body));
}

Artifact read_artifact(const std::filesystem::path& path, std::optional<ArtifactKind> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_artifact(ss.str(), expected);
}

json to_json(const FeatureVocabulary& v) {
  json items = json::array();
  for (const VocabItem& it : v.items) items.push_back({it.first, it.second, it.count});
  return {{"fingerprint", v.fingerprint}, {"items", items}};
}

FeatureVocabulary vocab_from_json(const json& j) {
  return guarded([&] {
    FeatureVocabulary v;
    v.fingerprint = j.at("fingerprint").get<std::string>();
    for (const json& e : j.at("items")) {
      v.items.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<std::size_t>()});
    }
    return v;
  });
}

json to_json(const GbdtModel& m) {
  json trees = json::array();
  for (const RegressionTree& t : m.trees) {
    json nodes = json::array();
    for (const TreeNode& n : t.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    }
    trees.push_back(std::move(nodes));
  }
  json loss = json::array();
  for (double l : m.train_loss) loss.push_back(num(l));
  const GbdtConfig& c = m.config;
  return {{"config",
           {{"n_trees", c.n_trees},
            {"max_depth", c.max_depth},
            {"learning_rate", c.learning_rate},
            {"min_leaf", c.min_leaf},
            {"n_bins", c.n_bins},
            {"subsample", c.subsample},
            {"l2", c.l2}}},
          {"base_logit", m.base_logit},
          {"n_features", m.n_features},
          {"vocab_fingerprint", m.vocab_fingerprint},
          {"threshold", num(m.threshold)},
          {"train_loss", loss},
          {"trees", trees}};
}

GbdtModel gbdt_from_json(const json& j) {
  return guarded([&] {
    GbdtModel m;
    const json& c = j.at("config");
    m.config.n_trees = c.at("n_trees").get<int>();
    m.config.max_depth = c.at("max_depth").get<int>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.min_leaf = c.at("min_leaf").get<int>();
    m.config.n_bins = c.at("n_bins").get<int>();
    m.config.subsample = c.at("subsample").get<double>();
    m.config.l2 = c.at("l2").get<double>();
    m.base_logit = j.at("base_logit").get<double>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.vocab_fingerprint = j.at("vocab_fingerprint").get<std::string>();
    m.threshold = get_num(j.at("threshold"));
    for (const json& l : j.at("train_loss")) m.train_loss.push_back(get_num(l));
    for (const json& t : j.at("trees")) {
      RegressionTree tree;
      for (const json& n : t) {
        tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                              n.at(3).get<int>(), n.at(4).get<double>()});
      }
      const int n_nodes = static_cast<int>(tree.nodes.size());
      for (const TreeNode& n : tree.nodes) {
        if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= n_nodes || n.right >= n_nodes ||
                             n.feature >= static_cast<int>(m.n_features))) {
          throw FormatError("tree node references are out of range");
        }
      }
      if (tree.nodes.empty()) throw FormatError("empty tree");
      m.trees.push_back(std::move(tree));
    }
    return m;
  });
}

json to_json(const SiameseModel& m, const std::vector<SeqSample>& references) {
  const SiameseConfig& c = m.config;
  json tensors = json::object();
  for_each_tensor(m.params, [&](std::string_view name, const double* d, long r, long cols) {
    tensors[std::string(name)] = matrix_json(d, r, cols);
  });
  auto vec = [](const Vec& v) { return matrix_json(v.data(), v.size(), 1); };
  json buffers = {{"bn1.running_mean", vec(m.params.bn1.running_mean)},
                  {"bn1.running_var", vec(m.params.bn1.running_var)},
                  {"bn2.running_mean", vec(m.params.bn2.running_mean)},
                  {"bn2.running_var", vec(m.params.bn2.running_var)}};
  json refs = json::array();
  for (const SeqSample& s : references) refs.push_back(seq_json(s));
  return {{"config",
           {{"M", c.M},
            {"batch_size", c.batch_size},
            {"hidden_dim", c.hidden_dim},
            {"dropout", c.dropout},
            {"recurrent_dropout", c.recurrent_dropout},
            {"lr", c.lr},
            {"epochs", c.epochs},
            {"l2", c.l2},
            {"bn_momentum", c.bn_momentum},
            {"bn_eps", c.bn_eps}}},
          {"threshold", num(m.threshold)},
          {"tensors", tensors},
          {"buffers", buffers},
          {"references", refs}};
}

SiameseModel siamese_from_json(const json& j, std::vector<SeqSample>* references) {
  return guarded([&] {
    SiameseConfig c;
    const json& jc = j.at("config");
    c.M = jc.at("M").get<std::size_t>();
    c.batch_size = jc.at("batch_size").get<std::size_t>();
    c.hidden_dim = jc.at("hidden_dim").get<std::size_t>();
    c.dropout = jc.at("dropout").get<double>();
    c.recurrent_dropout = jc.at("recurrent_dropout").get<double>();
    c.lr = jc.at("lr").get<double>();
    c.epochs = jc.at("epochs").get<int>();
    c.l2 = jc.at("l2").get<double>();
    c.bn_momentum = jc.at("bn_momentum").get<double>();
    c.bn_eps = jc.at("bn_eps").get<double>();
    SiameseModel m = init_siamese(c, 0);
    m.threshold = get_num(j.at("threshold"));
    const json& tensors = j.at("tensors");
    for_each_tensor(m.params, [&](std::string_view name, double* d, long r, long cols) {
      const json& t = tensors.at(std::string(name));
      if (t.at("rows").get<long>() != r || t.at("cols").get<long>() != cols ||
          t.at("data").size() != static_cast<std::size_t>(r * cols)) {
        throw FormatError("tensor " + std::string(name) + " has the wrong shape");
      }
      for (long i = 0; i < r * cols; ++i) d[i] = t.at("data")[static_cast<std::size_t>(i)].get<double>();
    });
    const json& b = j.at("buffers");
    auto load_vec = [&](const char* name, Vec& v) {
      const json& t = b.at(name);
      if (t.at("data").size() != static_cast<std::size_t>(v.size())) {
        throw FormatError(std::string("buffer ") + name + " has the wrong shape");
      }
      for (long i = 0; i < v.size(); ++i) v[i] = t.at("data")[static_cast<std::size_t>(i)].get<double>();
    };
    load_vec("bn1.running_mean", m.params.bn1.running_mean);
    load_vec("bn1.running_var", m.params.bn1.running_var);
    load_vec("bn2.running_mean", m.params.bn2.running_mean);
    load_vec("bn2.running_var", m.params.bn2.running_var);
    if (references) {
      references->clear();
      for (const json& r : j.at("references")) references->push_back(seq_from_json(r));
    }
    return m;
  });
}

json to_json(const TimingDictionary& d) {
  json users = json::object();
  for (const auto& [u, t] : d.per_user) users[u] = table_json(t);
  return {{"kit_variant", std::string(to_string(d.variant))},
          {"global_kht", stat_json(d.global_kht)},
          {"global_kit", stat_json(d.global_kit)},
          {"pooled", table_json(d.pooled)},
          {"per_user", users}};
}

TimingDictionary timing_dictionary_from_json(const json& j) {
  return guarded([&] {
    TimingDictionary d;
    d.variant = parse_kit_variant(j.at("kit_variant").get<std::string>());
    d.global_kht = stat_from_json(j.at("global_kht"));
    d.global_kit = stat_from_json(j.at("global_kit"));
    d.pooled = table_from_json(j.at("pooled"));
    for (auto it = j.at("per_user").begin(); it != j.at("per_user").end(); ++it) {
      d.per_user[it.key()] = table_from_json(it.value());
    }
    return d;
  });
}

json to_json(const EvalReport& r) {
  const SplitManifest& m = r.manifest;
  json groups = json::array();
  for (const GroupSplit& g : m.groups) groups.push_back({{"group", g.group}, {"train", g.train}, {"test", g.test}});
  json group_reports = json::array();
  for (const GroupReport& g : r.groups) {
    group_reports.push_back({{"group", g.group},
                             {"metrics", to_json(g.metrics)},
                             {"eer", num(g.eer)},
                             {"threshold", num(g.threshold)},
                             {"n_test", g.n_test}});
  }
  json scores = json::array();
  for (const ScoredSession& s : r.scores) scores.push_back({s.key, num(s.score), s.assisted});
  return {{"scenario", r.scenario},
          {"model", r.model},
          {"f1", num(r.f1)},
          {"far", num(r.far)},
          {"frr", num(r.frr)},
          {"accuracy", num(r.accuracy)},
          {"eer", num(r.eer)},
          {"threshold", num(r.threshold)},
          {"degenerate", r.degenerate},
          {"manifest",
           {{"family", std::string(to_string(m.family))},
            {"train", m.train},
            {"test", m.test},
            {"groups", groups},
            {"train_groups", m.train_group_keys},
            {"test_groups", m.test_group_keys}}},
          {"group_reports", group_reports},
          {"scores", scores},
          {"config", r.config}};
}

EvalReport report_from_json(const json& j) {
  return guarded([&] {
    EvalReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.f1 = get_num(j.at("f1"));
    r.far = get_num(j.at("far"));
    r.frr = get_num(j.at("frr"));
    r.accuracy = get_num(j.at("accuracy"));
    r.eer = get_num(j.at("eer"));
    r.threshold = get_num(j.at("threshold"));
    r.degenerate = j.at("degenerate").get<bool>();
    const json& m = j.at("manifest");
    r.manifest.family = parse_scenario(m.at("family").get<std::string>());
    r.manifest.train = m.at("train").get<std::vector<std::string>>();
    r.manifest.test = m.at("test").get<std::vector<std::string>>();
    for (const json& g : m.at("groups")) {
      r.manifest.groups.push_back({g.at("group").get<std::string>(),
                                   g.at("train").get<std::vector<std::string>>(),
                                   g.at("test").get<std::vector<std::string>>()});
    }
    r.manifest.train_group_keys = m.at("train_groups").get<std::vector<std::string>>();
    r.manifest.test_group_keys = m.at("test_groups").get<std::vector<std::string>>();
    for (const json& g : j.at("group_reports")) {
      r.groups.push_back({g.at("group").get<std::string>(), metrics_from_json(g.at("metrics")),
                          get_num(g.at("eer")), get_num(g.at("threshold")),
                          g.at("n_test").get<std::size_t>()});
    }
    for (const json& s : j.at("scores")) {
      r.scores.push_back({s.at(0).get<std::string>(), get_num(s.at(1)), s.at(2).get<bool>()});
    }
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    return r;
  });
}

json to_json(const PipelineConfig& c) {
  return {{"model", std::string(to_string(c.model))},
          {"window", c.segment.window_size},
          {"overlap", c.segment.overlap},
          {"min_tail_fraction", c.segment.min_tail_fraction},
          {"shift_fraction_max", c.segment.shift_fraction_max},
          {"min_length_fraction", c.segment.min_length_fraction},
          {"kit_variant", std::string(to_string(c.features.kit))},
          {"pause_threshold_ms", c.features.pause_threshold_ms},
          {"min_observations", c.features.min_observations},
          {"budget", c.budget},
          {"exclude_gbdt_windows", c.exclude_gbdt_windows},
          {"exclude_siamese_windows", c.exclude_siamese_windows},
          {"vocab_mode", c.vocab_mode == VocabBudget::Combined ? "combined" : "per-kind"},
          {"aggregation", std::string(to_string(c.aggregation))},
          {"gbdt",
           {{"n_trees", c.gbdt.n_trees},
            {"max_depth", c.gbdt.max_depth},
            {"learning_rate", c.gbdt.learning_rate},
            {"min_leaf", c.gbdt.min_leaf},
            {"n_bins", c.gbdt.n_bins},
            {"subsample", c.gbdt.subsample},
            {"l2", c.gbdt.l2}}},
          {"grid_search", c.grid_search},
          {"cv_folds", c.cv_folds},
          {"siamese",
           {{"M", c.siamese.M},
            {"batch_size", c.siamese.batch_size},
            {"hidden_dim", c.siamese.hidden_dim},
            {"dropout", c.siamese.dropout},
            {"recurrent_dropout", c.siamese.recurrent_dropout},
            {"lr", c.siamese.lr},
            {"epochs", c.siamese.epochs},
            {"l2", c.siamese.l2}}},
          {"siamese_references", c.siamese_references},
          {"siamese_batches", c.siamese_batches},
          {"siamese_validation", c.siamese_validation},
          {"seed", c.seed}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  return guarded([&] {
    PipelineConfig c;
    c.model = parse_model_kind(j.at("model").get<std::string>());
    c.segment.window_size = j.at("window").get<std::size_t>();
    c.segment.overlap = j.at("overlap").get<std::size_t>();
    c.segment.min_tail_fraction = j.at("min_tail_fraction").get<double>();
    c.segment.shift_fraction_max = j.at("shift_fraction_max").get<double>();
    c.segment.min_length_fraction = j.at("min_length_fraction").get<double>();
    c.features.kit = parse_kit_variant(j.at("kit_variant").get<std::string>());
    c.features.pause_threshold_ms = j.at("pause_threshold_ms").get<double>();
    c.features.min_observations = j.at("min_observations").get<std::size_t>();
    c.budget = j.at("budget").get<std::size_t>();
    c.exclude_gbdt_windows = j.value("exclude_gbdt_windows", false);
    c.exclude_siamese_windows = j.value("exclude_siamese_windows", true);
    c.vocab_mode = j.at("vocab_mode").get<std::string>() == "combined" ? VocabBudget::Combined
                                                                      : VocabBudget::PerKind;
    c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    const json& g = j.at("gbdt");
    c.gbdt.n_trees = g.at("n_trees").get<int>();
    c.gbdt.max_depth = g.at("max_depth").get<int>();
    c.gbdt.learning_rate = g.at("learning_rate").get<double>();
    c.gbdt.min_leaf = g.at("min_leaf").get<int>();
    c.gbdt.n_bins = g.at("n_bins").get<int>();
    c.gbdt.subsample = g.at("subsample").get<double>();
    c.gbdt.l2 = g.at("l2").get<double>();
    c.grid_search = j.at("grid_search").get<bool>();
    c.cv_folds = j.at("cv_folds").get<int>();
    const json& s = j.at("siamese");
    c.siamese.M = s.at("M").get<std::size_t>();
    c.siamese.batch_size = s.at("batch_size").get<std::size_t>();
    c.siamese.hidden_dim = s.at("hidden_dim").get<std::size_t>();
    c.siamese.dropout = s.at("dropout").get<double>();
    c.siamese.recurrent_dropout = s.at("recurrent_dropout").get<double>();
    c.siamese.lr = s.at("lr").get<double>();
    c.siamese.epochs = s.at("epochs").get<int>();
    c.siamese.l2 = s.at("l2").get<double>();
    c.siamese_references = j.at("siamese_references").get<std::size_t>();
    c.siamese_batches = j.at("siamese_batches").get<std::size_t>();
    c.siamese_validation = j.at("siamese_validation").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  });
}

namespace {

ArtifactHeader header_for(ArtifactKind kind, const std::string& fp) {
  return {kind, kFormatVersion, creation_time(), fp};
}

}  // namespace

void save_vocab(const std::filesystem::path& path, const FeatureVocabulary& v,
                const std::string& fp) {
  write_artifact(path, header_for(ArtifactKind::Vocab, fp), to_json(v));
}
FeatureVocabulary load_vocab(const std::filesystem::path& path) {
  return vocab_from_json(read_artifact(path, ArtifactKind::Vocab).body);
}
void save_gbdt(const std::filesystem::path& path, const GbdtModel& m, const std::string& fp) {
  write_artifact(path, header_for(ArtifactKind::Gbdt, fp), to_json(m));
}
GbdtModel load_gbdt(const std::filesystem::path& path) {
  return gbdt_from_json(read_artifact(path, ArtifactKind::Gbdt).body);
}
void save_siamese(const std::filesystem::path& path, const SiameseModel& m,
                  const std::vector<SeqSample>& references, const std::string& fp) {
  write_artifact(path, header_for(ArtifactKind::Siamese, fp), to_json(m, references));
}
SiameseModel load_siamese(const std::filesystem::path& path, std::vector<SeqSample>* references) {
  return siamese_from_json(read_artifact(path, ArtifactKind::Siamese).body, references);
}
void save_timing_dictionary(const std::filesystem::path& path, const TimingDictionary& d,
                            const std::string& fp) {
  write_artifact(path, header_for(ArtifactKind::TimingDict, fp), to_json(d));
}
TimingDictionary load_timing_dictionary(const std::filesystem::path& path) {
  return timing_dictionary_from_json(read_artifact(path, ArtifactKind::TimingDict).body);
}
void save_report(const std::filesystem::path& path, const EvalReport& r, const std::string& fp) {
  write_artifact(path, header_for(ArtifactKind::Report, fp), to_json(r));
}
EvalReport load_report(const std::filesystem::path& path) {
  return report_from_json(read_artifact(path, ArtifactKind::Report).body);
}

std::string corpus_fingerprint(std::span<const Session> sessions) {
  Fingerprint fp;
  for (const Session& s : sessions) {
    fp.update(s.key());
    fp.update(std::string_view(to_string(s.mode)));
    fp.update(static_cast<std::uint64_t>(s.events.size()));
    for (const KeyEvent& e : s.events) {
      fp.update(static_cast<std::uint64_t>(e.action == KeyAction::Up ? 1 : 0));
      fp.update(static_cast<std::uint64_t>(e.keycode));
      fp.update(e.timestamp);
    }
  }
  return fp.hex();
}

}  // namespace kstroke
