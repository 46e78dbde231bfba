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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kstroke/cli.hpp"
#include "kstroke/logmodel.hpp"
#include "kstroke/persistence.hpp"

namespace kstroke {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("kstroke_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string> kSmall = {"--users", "12", "--sessions", "2", "--seed", "7"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

TEST(Cli, NoSubcommandIsUsageError) {
  const Result r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownFlagIsUsageError) {
  const Result r = run({"eval", "--frobnicate", "3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, BadEnumIsUsageError) {
  EXPECT_EQ(run({"eval", "--model", "forest", "--out", scratch("enum").string()}).code, 2);
  EXPECT_EQ(run({"eval", "--scenario", "planet-agnostic", "--out", scratch("enum").string()}).code, 2);
}

TEST(Cli, InvalidSegmentConfigIsUsageError) {
  EXPECT_EQ(run({"segment", "--window", "100", "--overlap", "100", "--out", scratch("seg").string()}).code, 2);
}

TEST(Cli, MissingInputFileIsRuntimeError) {
  const Result r = run({"ingest", "--input", "/nonexistent/file.jsonl", "--out", scratch("missing").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("level=error"), std::string::npos);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, SynthThenIngestRoundTrips) {
  const fs::path a = scratch("synth");
  const fs::path b = scratch("ingest");
  ASSERT_EQ(run(with({"synth", "--out", a.string()}, kSmall)).code, 0);
  ASSERT_EQ(run({"ingest", "--input", (a / "corpus.jsonl").string(), "--out", b.string()}).code, 0);
  const auto x = parse_canonical_file(a / "corpus.jsonl").sessions;
  EXPECT_EQ(x, parse_canonical_file(b / "corpus.jsonl").sessions);
  EXPECT_EQ(x.size(), 12u * 2 * 2);
  EXPECT_TRUE(fs::exists(a / "run_config.json"));
  EXPECT_TRUE(fs::exists(a / "summary.csv"));
}

TEST(Cli, EvalThenAttack) {
  const fs::path dir = scratch("eval");
  const Result e = run({"eval", "--scenario", "user-agnostic", "--model", "gbdt", "--seed", "7",
                        "--out", dir.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_GE(load_report(dir / "report.artifact").f1, 0.95);
  EXPECT_TRUE(fs::exists(dir / "scores.csv"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));

  const Result a = run({"attack", "--mode", "at-p", "--seed", "7", "--input", dir.string(),
                        "--out", dir.string()});
  ASSERT_EQ(a.code, 0) << a.err;
  std::ifstream in(dir / "attack.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_GE(j.at("asr").get<double>(), 0.8);
  EXPECT_TRUE(fs::exists(dir / "forged.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "timing-dict.artifact"));

  const Result rep = run({"report", "--input", dir.string()});
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("f1"), std::string::npos);
}

TEST(Cli, RerunsAreByteIdentical) {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const fs::path a = scratch("idem_a");
  const fs::path b = scratch("idem_b");
  const auto args = with({"eval", "--scenario", "user-agnostic"}, kSmall);
  ASSERT_EQ(run(with(args, {"--out", a.string()})).code, 0);
  ASSERT_EQ(run(with(args, {"--out", b.string()})).code, 0);
  ::unsetenv("SOURCE_DATE_EPOCH");
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    if (name == "run_config.json") continue;  // records the output path
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 4u);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = KSTROKE_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("bogus"), 2);
  EXPECT_EQ(status("ingest --input /nonexistent/x --out " + scratch("bin").string()), 1);
}

}  // namespace
}  // namespace kstroke
