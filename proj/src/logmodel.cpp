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

#include "kstroke/logmodel.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "kstroke/errors.hpp"
#include "kstroke/keymap.hpp"

namespace kstroke {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

void check_event(const KeyEvent& e) {
  if (e.keycode < 0 || e.keycode > 255) {
    throw ValidationError("keycode " + std::to_string(e.keycode) + " outside [0, 255]");
  }
  if (!std::isfinite(e.timestamp) || e.timestamp < 0.0) {
    throw ValidationError("timestamp must be finite and non-negative");
  }
}

std::optional<std::string> optional_string(const nlohmann::json& obj, const char* name,
                                           std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line, std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

std::string required_string(const nlohmann::json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(line, std::string("missing string field '") + name + "'");
  }
  return it->get<std::string>();
}

Session parse_record(const std::string& text, std::size_t line, std::size_t& dropped) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line, e.what());
  }
  if (!obj.is_object()) throw ParseError(line, "record is not an object");

  Session s;
  s.user_id = required_string(obj, "user", line);
  s.session_id = required_string(obj, "session", line);
  try {
    s.mode = parse_mode(required_string(obj, "mode", line));
  } catch (const ValidationError& e) {
    throw ParseError(line, e.what());
  }
  s.context = optional_string(obj, "context", line);
  s.keyboard = optional_string(obj, "keyboard", line);
  s.dataset = required_string(obj, "dataset", line);
  s.text = optional_string(obj, "text", line);
  if (auto it = obj.find("provenance"); it != obj.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError(line, "field 'provenance' must be an object");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw ParseError(line, "provenance values must be strings");
      s.provenance.emplace(k, v.get<std::string>());
    }
  }

  auto events_it = obj.find("events");
  if (events_it == obj.end() || !events_it->is_array()) {
    throw ParseError(line, "missing array field 'events'");
  }
  std::vector<KeyEvent> events;
  events.reserve(events_it->size());
  for (const auto& ev : *events_it) {
    if (!ev.is_object()) throw ParseError(line, "event is not an object");
    auto a = ev.find("a");
    auto k = ev.find("k");
    auto t = ev.find("t");
    if (a == ev.end() || !a->is_string() || k == ev.end() || !k->is_number() ||
        t == ev.end() || !t->is_number()) {
      throw ParseError(line, "event needs {a, k, t}");
    }
    const std::string action = a->get<std::string>();
    if (action != "D" && action != "U") throw ParseError(line, "event action must be D or U");
    if (!k->is_number_integer()) throw ParseError(line, "keycode must be an integer");
    KeyEvent e;
    e.action = action == "D" ? KeyAction::Down : KeyAction::Up;
    const auto code = k->get<std::int64_t>();
    if (code < 0 || code > 255) {
      throw ValidationError("line " + std::to_string(line) + ": keycode " +
                            std::to_string(code) + " outside [0, 255]");
    }
    e.keycode = static_cast<int>(code);
    e.timestamp = t->get<double>();
    events.push_back(e);
  }
  try {
    ValidationResult v = validate_events(std::move(events));
    s.events = std::move(v.events);
    dropped += v.dropped;
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return s;
}

// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::vector<std::string> expected_columns(ExternalFormat format) {
  std::vector<std::string> cols = {"user", "session", "action", "keycode", "timestamp"};
  switch (format) {
    case ExternalFormat::SbuLike:
      cols.insert(cols.end(), {"task", "topic"});
      break;
    case ExternalFormat::BuffaloLike:
      cols.insert(cols.end(), {"task", "keyboard"});
      break;
    case ExternalFormat::IiitdLike:
      cols.insert(cols.end(), {"dataset", "phase", "question"});
      break;
  }
  return cols;
}

std::string context_tag(const std::string& raw) {
  const std::string v = lower(raw);
  if (v == "gm" || v == "gay marriage") return "GM";
  if (v == "gc" || v == "gun control") return "GC";
  if (v == "rf" || v == "restaurant feedback" || v == "restaurant") return "RF";
  return raw;
}

std::string keyboard_tag(const std::string& raw) {
  const std::string v = lower(raw);
  if (v == "k0" || v == "lenovo") return "K0";
  if (v == "k1" || v == "hp" || v == "hp wireless") return "K1";
  if (v == "k2" || v == "microsoft") return "K2";
  if (v == "k3" || v == "apple" || v == "apple bluetooth") return "K3";
  return raw;
}

Mode task_mode(const std::string& raw, std::size_t line) {
  const std::string v = lower(raw);
  if (v == "free") return Mode::Free;
  if (v == "fixed") return Mode::Fixed;
  throw AdapterError("row " + std::to_string(line) + ": task must be free or fixed, got '" +
                     raw + "'");
}

KeyAction parse_action(const std::string& raw, std::size_t line) {
  const std::string v = lower(raw);
  if (v == "d" || v == "down" || v == "keydown") return KeyAction::Down;
  if (v == "u" || v == "up" || v == "keyup") return KeyAction::Up;
  throw AdapterError("row " + std::to_string(line) + ": unknown action '" + raw + "'");
}

// Timestamps above this look like epoch milliseconds and are rebased to the
// session's first event.
constexpr double kEpochThresholdMs = 1e9;

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::BonaFide: return "BonaFide";
    case Mode::Transcribed: return "Transcribed";
    case Mode::Paraphrased: return "Paraphrased";
    case Mode::Fixed: return "Fixed";
    case Mode::Free: return "Free";
  }
  return "BonaFide";
}

Mode parse_mode(std::string_view text) {
  static const std::array<Mode, 5> kModes = {Mode::BonaFide, Mode::Transcribed,
                                             Mode::Paraphrased, Mode::Fixed, Mode::Free};
  const std::string want = lower(text);
  for (Mode m : kModes) {
    if (lower(to_string(m)) == want) return m;
  }
  if (want == "bona-fide" || want == "bonafide" || want == "bona_fide") return Mode::BonaFide;
  throw ValidationError("unknown mode '" + std::string(text) + "'");
}

SessionLabel label_for(Mode mode) {
  switch (mode) {
    case Mode::Transcribed:
    case Mode::Paraphrased:
    case Mode::Fixed:
      return {true};
    case Mode::BonaFide:
    case Mode::Free:
      return {false};
  }
  return {false};
}

std::string Session::key() const { return dataset + "/" + user_id + "/" + session_id; }

ValidationResult validate_events(std::vector<KeyEvent> events) {
  for (const KeyEvent& e : events) check_event(e);
  std::stable_sort(events.begin(), events.end(), [](const KeyEvent& a, const KeyEvent& b) {
    return a.timestamp < b.timestamp;
  });
  std::array<int, 256> outstanding{};
  ValidationResult result;
  result.events.reserve(events.size());
  for (const KeyEvent& e : events) {
    if (e.action == KeyAction::Down) {
      ++outstanding[static_cast<std::size_t>(e.keycode)];
      result.events.push_back(e);
    } else if (outstanding[static_cast<std::size_t>(e.keycode)] > 0) {
      --outstanding[static_cast<std::size_t>(e.keycode)];
      result.events.push_back(e);
    } else {
      ++result.dropped;
    }
  }
  return result;
}

ParseResult parse_canonical(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    result.sessions.push_back(parse_record(line, line_no, result.dropped_events));
  }
  return result;
}

ParseResult parse_canonical_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_canonical(in);
}

std::string serialize_canonical(const Session& session) {
  ordered_json obj;
  obj["user"] = session.user_id;
  obj["session"] = session.session_id;
  obj["mode"] = std::string(to_string(session.mode));
  obj["context"] = session.context ? ordered_json(*session.context) : ordered_json(nullptr);
  obj["keyboard"] = session.keyboard ? ordered_json(*session.keyboard) : ordered_json(nullptr);
  obj["dataset"] = session.dataset;
  if (session.text) obj["text"] = *session.text;
  if (!session.provenance.empty()) {
    ordered_json prov = ordered_json::object();
    for (const auto& [k, v] : session.provenance) prov[k] = v;
    obj["provenance"] = std::move(prov);
  }
  ordered_json events = ordered_json::array();
  for (const KeyEvent& e : session.events) {
    ordered_json ev;
    ev["a"] = e.action == KeyAction::Down ? "D" : "U";
    ev["k"] = e.keycode;
    ev["t"] = e.timestamp;
    events.push_back(std::move(ev));
  }
  obj["events"] = std::move(events);
  return obj.dump();
}

void write_canonical(std::ostream& out, std::span<const Session> sessions) {
  for (const Session& s : sessions) out << serialize_canonical(s) << '\n';
}

void write_canonical_file(const std::filesystem::path& path, std::span<const Session> sessions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_canonical(out, sessions);
}

ExternalFormat parse_external_format(std::string_view name) {
  const std::string v = lower(name);
  if (v == "sbu" || v == "sbu-like") return ExternalFormat::SbuLike;
  if (v == "buffalo" || v == "buffalo-like") return ExternalFormat::BuffaloLike;
  if (v == "iiitd" || v == "iiitd-like" || v == "iiitd-bu") return ExternalFormat::IiitdLike;
  throw AdapterError("unknown external format '" + std::string(name) + "'");
}

std::vector<Session> adapt_external(std::istream& in, ExternalFormat format,
                                    std::size_t* dropped_events) {
  std::string line;
  std::size_t line_no = 0;
  // Skip leading blank lines; an input with no header is an empty dataset.
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (dropped_events) *dropped_events = 0;
  if (!have_header) return {};

  const std::vector<std::string> expected = expected_columns(format);
  const std::vector<std::string> header = split_csv(line);
  for (std::size_t i = 0; i < std::max(header.size(), expected.size()); ++i) {
    if (i >= header.size()) {
      throw AdapterError("missing column '" + expected[i] + "' at position " + std::to_string(i));
    }
    if (i >= expected.size()) {
      throw AdapterError("unexpected column '" + header[i] + "' at position " + std::to_string(i));
    }
    if (lower(header[i]) != expected[i]) {
      throw AdapterError("unexpected column '" + header[i] + "' at position " +
                         std::to_string(i) + " (expected '" + expected[i] + "')");
    }
  }

  std::vector<Session> sessions;
  std::vector<std::vector<KeyEvent>> raw_events;
  std::unordered_map<std::string, std::size_t> index;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != expected.size()) {
      throw AdapterError("row " + std::to_string(line_no) + ": expected " +
                         std::to_string(expected.size()) + " fields, got " +
                         std::to_string(f.size()));
    }
    KeyEvent e;
    e.action = parse_action(f[2], line_no);
    try {
      std::size_t pos = 0;
      const long code = std::stol(f[3], &pos);
      if (pos != f[3].size()) throw std::invalid_argument("keycode");
      if (code < 0 || code > 255) {
        throw ValidationError("row " + std::to_string(line_no) + ": keycode " + f[3] +
                              " outside [0, 255]");
      }
      e.keycode = static_cast<int>(code);
      e.timestamp = std::stod(f[4], &pos);
      if (pos != f[4].size()) throw std::invalid_argument("timestamp");
    } catch (const std::logic_error&) {
      throw AdapterError("row " + std::to_string(line_no) + ": bad keycode or timestamp");
    }

    Session proto;
    proto.user_id = f[0];
    proto.session_id = f[1];
    switch (format) {
      case ExternalFormat::SbuLike:
        proto.mode = task_mode(f[5], line_no);
        proto.context = context_tag(f[6]);
        proto.dataset = "SBU";
        break;
      case ExternalFormat::BuffaloLike:
        proto.mode = task_mode(f[5], line_no);
        proto.keyboard = keyboard_tag(f[6]);
        proto.dataset = "Buffalo";
        break;
      case ExternalFormat::IiitdLike: {
        proto.dataset = f[5];
        const bool paraphrased = lower(f[5]).find("paraphras") != std::string::npos;
        if (f[6] == "1") {
          proto.mode = Mode::BonaFide;
        } else if (f[6] == "2") {
          proto.mode = paraphrased ? Mode::Paraphrased : Mode::Transcribed;
        } else {
          throw AdapterError("row " + std::to_string(line_no) + ": phase must be 1 or 2");
        }
        if (!f[7].empty()) proto.context = f[7];
        break;
      }
    }

    const std::string key = proto.dataset + "\x1f" + proto.user_id + "\x1f" + proto.session_id;
    auto [it, inserted] = index.emplace(key, sessions.size());
    if (inserted) {
      sessions.push_back(std::move(proto));
      raw_events.emplace_back();
    }
    raw_events[it->second].push_back(e);
  }

  std::size_t dropped = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    std::vector<KeyEvent>& ev = raw_events[i];
    if (!ev.empty()) {
      const double first =
          std::min_element(ev.begin(), ev.end(), [](const KeyEvent& a, const KeyEvent& b) {
            return a.timestamp < b.timestamp;
          })->timestamp;
      if (first > kEpochThresholdMs) {
        for (KeyEvent& e : ev) e.timestamp -= first;
      }
    }
    ValidationResult v = validate_events(std::move(ev));
    sessions[i].events = std::move(v.events);
    dropped += v.dropped;
  }
  if (dropped_events) *dropped_events = dropped;
  return sessions;
}

std::vector<Session> adapt_external(const std::filesystem::path& path, ExternalFormat format,
                                    std::size_t* dropped_events) {
  std::ifstream in(path);
  if (!in) throw AdapterError("cannot open " + path.string());
  return adapt_external(in, format, dropped_events);
}

std::string reconstruct_text(std::span<const KeyEvent> events) {
  std::string text;
  int shift_held = 0;
  for (const KeyEvent& e : events) {
    if (keymap::is_shift(e.keycode)) {
      if (e.action == KeyAction::Down) {
        ++shift_held;
      } else if (shift_held > 0) {
        --shift_held;
      }
      continue;
    }
    if (e.action != KeyAction::Down) continue;
    if (e.keycode == keymap::kBackspace) {
      if (!text.empty()) text.pop_back();
      continue;
    }
    if (auto c = keymap::to_char(e.keycode, shift_held > 0)) text.push_back(*c);
  }
  return text;
}

}  // namespace kstroke
