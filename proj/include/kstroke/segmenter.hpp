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

#ifndef KSTROKE_SEGMENTER_HPP_
#define KSTROKE_SEGMENTER_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kstroke/logmodel.hpp"

namespace kstroke {

struct SegmentConfig {
  std::size_t window_size = 1000;
  std::size_t overlap = 300;  // events shared by consecutive windows
  double min_tail_fraction = 0.5;
  double shift_fraction_max = 0.20;
  double min_length_fraction = 0.5;  // of the target sequence length M

  std::size_t stride() const { return window_size - overlap; }
  // Throws ConfigError unless 0 <= overlap < window_size.
  void validate() const;
};

struct Window {
  std::string session_key;
  std::string user_id;
  std::size_t start_index = 0;
  std::vector<KeyEvent> events;
  SessionLabel label;
};

// Full windows start at 0, S, 2S, ...; the first partial window after them is
// kept when it holds at least min_tail_fraction * W events.
std::vector<Window> segment(const Session& session, const SegmentConfig& cfg);

// Drops windows with too many Shift events (Down and Up both count) or fewer
// than min_length_fraction * target_len events.
std::vector<Window> exclude(std::vector<Window> windows, const SegmentConfig& cfg,
                            std::size_t target_len);

double shift_fraction(std::span<const KeyEvent> events);

}  // namespace kstroke

#endif  // KSTROKE_SEGMENTER_HPP_
