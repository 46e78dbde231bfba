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

// Command-line driver. Stages exchange files so any stage can be re-run or
// inspected on its own:
//
//   synth      seeded synthetic corpus         -> corpus.jsonl
//   ingest     canonical or external logs      -> corpus.jsonl
//   segment    windows per session             -> windows.csv
//   featurize  vocabulary and feature matrix   -> vocab.artifact, features.csv
//   train      detector on a whole corpus      -> model artifacts, detector.json
//   eval       one scenario split              -> manifest.json, report.artifact, scores.csv
//   attack     forgeries against a detector    -> timing-dict.artifact, attack.json
//   advtrain   augment, retrain, re-attack     -> advtrain.json
//   report     summarize a report artifact     -> stdout (and report.csv)
//
// Every run writes run_config.json and summary.csv to --out. Exit codes: 0 on
// success, 1 on runtime error, 2 on usage error.

#ifndef KSTROKE_CLI_HPP_
#define KSTROKE_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace kstroke {

// `args` excludes the program name. Logs go to `err` as key=value lines.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kstroke

#endif  // KSTROKE_CLI_HPP_
