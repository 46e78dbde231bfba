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

// Keystroke log data model.
//
// A Session is one typed response: an ordered list of KeyDown/KeyUp events
// with session-relative millisecond timestamps, plus the labels needed by the
// evaluation scenarios (user, keyboard, context, dataset, writing mode).
//
// The canonical on-disk form is one JSON object per line:
//
//   {"user":"u01","session":"s1","mode":"BonaFide","context":"GC",
//    "keyboard":null,"dataset":"SBU","events":[{"a":"D","k":65,"t":0.0},...]}
//
// Optional members "text" (string) and "provenance" (object of strings) are
// emitted only when present, after "dataset" and before "events".

#ifndef KSTROKE_LOGMODEL_HPP_
#define KSTROKE_LOGMODEL_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kstroke {

enum class KeyAction { Down, Up };

struct KeyEvent {
  KeyAction action = KeyAction::Down;
  int keycode = 0;
  double timestamp = 0.0;  // ms, session-relative

  friend bool operator==(const KeyEvent&, const KeyEvent&) = default;
};

enum class Mode { BonaFide, Transcribed, Paraphrased, Fixed, Free };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct SessionLabel {
  bool is_assisted = false;

  friend bool operator==(const SessionLabel&, const SessionLabel&) = default;
};

// Transcribed, Paraphrased and Fixed count as assisted writing.
SessionLabel label_for(Mode mode);

struct Session {
  std::string user_id;
  std::string session_id;
  Mode mode = Mode::BonaFide;
  std::optional<std::string> context;
  std::optional<std::string> keyboard;
  std::string dataset;
  std::vector<KeyEvent> events;
  std::optional<std::string> text;
  std::map<std::string, std::string> provenance;

  SessionLabel label() const { return label_for(mode); }
  // Unique key across datasets: "dataset/user/session".
  std::string key() const;

  friend bool operator==(const Session&, const Session&) = default;
};

struct ValidationResult {
  std::vector<KeyEvent> events;
  std::size_t dropped = 0;
};

// Stable-sorts by timestamp and drops Up events that have no outstanding
// Down for the same keycode. Throws ValidationError for out-of-range
// keycodes or negative/non-finite timestamps.
ValidationResult validate_events(std::vector<KeyEvent> events);

struct ParseResult {
  std::vector<Session> sessions;
  std::size_t dropped_events = 0;  // warning count
};

ParseResult parse_canonical(std::istream& in);
ParseResult parse_canonical_file(const std::filesystem::path& path);

std::string serialize_canonical(const Session& session);
void write_canonical(std::ostream& out, std::span<const Session> sessions);
void write_canonical_file(const std::filesystem::path& path,
                          std::span<const Session> sessions);

enum class ExternalFormat { SbuLike, BuffaloLike, IiitdLike };

ExternalFormat parse_external_format(std::string_view name);

// Reads an event-per-row CSV export. Column orders (header row required):
//
//   SbuLike:     user,session,action,keycode,timestamp,task,topic
//   BuffaloLike: user,session,action,keycode,timestamp,task,keyboard
//   IiitdLike:   user,session,action,keycode,timestamp,dataset,phase,question
//
// `task` is free|fixed; `topic` is a topic name or GM/GC/RF; `keyboard` is a
// K0-K3 tag or a vendor name; `phase` is 1 (independent) or 2 (assisted);
// `dataset` names the IIITD-BU variant (…Transcribed / …Paraphrased).
// `action` accepts D/U, down/up, keydown/keyup.
std::vector<Session> adapt_external(const std::filesystem::path& path,
                                    ExternalFormat format,
                                    std::size_t* dropped_events = nullptr);
std::vector<Session> adapt_external(std::istream& in, ExternalFormat format,
                                    std::size_t* dropped_events = nullptr);

// Replays Down events through the keycode table. Backspace removes the last
// character; Shift state capitalizes letters and selects shifted symbols.
std::string reconstruct_text(std::span<const KeyEvent> events);

}  // namespace kstroke

#endif  // KSTROKE_LOGMODEL_HPP_
