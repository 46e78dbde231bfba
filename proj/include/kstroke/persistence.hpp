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

// Versioned artifact files. Layout:
//
//   %kstroke-artifact
//   kind=gbdt
//   format_version=1
//   created=2026-01-01T00:00:00Z
//   corpus_fingerprint=fnv1a64:...
//   %body
//   { pretty-printed JSON body }
//   %crc32=1a2b3c4d
//
// The CRC-32 covers every byte before the final line. Doubles are written in
// shortest round-trip form, so models reload bit-identically; non-finite
// values are stored as the strings "inf", "-inf" and "nan". Files are written
// to a temporary sibling and renamed into place.
//
// `created` comes from SOURCE_DATE_EPOCH when set, else the current time.

#ifndef KSTROKE_PERSISTENCE_HPP_
#define KSTROKE_PERSISTENCE_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kstroke/deception.hpp"
#include "kstroke/features.hpp"
#include "kstroke/gbdt.hpp"
#include "kstroke/pipeline.hpp"
#include "kstroke/siamese.hpp"

namespace kstroke {

enum class ArtifactKind { Vocab, Gbdt, Siamese, TimingDict, Report };

std::string_view to_string(ArtifactKind k);
ArtifactKind parse_artifact_kind(std::string_view text);

inline constexpr int kFormatVersion = 1;

struct ArtifactHeader {
  ArtifactKind kind = ArtifactKind::Vocab;
  int format_version = kFormatVersion;
  std::string created;
  std::string corpus_fingerprint;
};

struct Artifact {
  ArtifactHeader header;
  nlohmann::json body;
};

// UTC ISO-8601 timestamp honoring SOURCE_DATE_EPOCH.
std::string creation_time();

std::string encode_artifact(const ArtifactHeader& header, const nlohmann::json& body);
// Checks the checksum, then the header, then the kind. Throws ChecksumError,
// FormatError, VersionError or KindMismatchError.
Artifact decode_artifact(std::string_view text, std::optional<ArtifactKind> expected);

void write_artifact(const std::filesystem::path& path, const ArtifactHeader& header,
                    const nlohmann::json& body);
Artifact read_artifact(const std::filesystem::path& path, std::optional<ArtifactKind> expected);

// Atomic text write: temporary sibling, then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

nlohmann::json to_json(const FeatureVocabulary& v);
FeatureVocabulary vocab_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GbdtModel& m);
GbdtModel gbdt_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SiameseModel& m, const std::vector<SeqSample>& references = {});
SiameseModel siamese_from_json(const nlohmann::json& j, std::vector<SeqSample>* references = nullptr);
nlohmann::json to_json(const TimingDictionary& d);
TimingDictionary timing_dictionary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

void save_vocab(const std::filesystem::path& path, const FeatureVocabulary& v,
                const std::string& corpus_fingerprint = "");
FeatureVocabulary load_vocab(const std::filesystem::path& path);
void save_gbdt(const std::filesystem::path& path, const GbdtModel& m,
               const std::string& corpus_fingerprint = "");
GbdtModel load_gbdt(const std::filesystem::path& path);
void save_siamese(const std::filesystem::path& path, const SiameseModel& m,
                  const std::vector<SeqSample>& references = {},
                  const std::string& corpus_fingerprint = "");
SiameseModel load_siamese(const std::filesystem::path& path,
                          std::vector<SeqSample>* references = nullptr);
void save_timing_dictionary(const std::filesystem::path& path, const TimingDictionary& d,
                            const std::string& corpus_fingerprint = "");
TimingDictionary load_timing_dictionary(const std::filesystem::path& path);
void save_report(const std::filesystem::path& path, const EvalReport& r,
                 const std::string& corpus_fingerprint = "");
EvalReport load_report(const std::filesystem::path& path);

// Fingerprint over session keys and events.
std::string corpus_fingerprint(std::span<const Session> sessions);

}  // namespace kstroke

#endif  // KSTROKE_PERSISTENCE_HPP_
