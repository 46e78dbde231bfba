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

#include "kstroke/segmenter.hpp"

#include <algorithm>

#include "kstroke/errors.hpp"
#include "kstroke/keymap.hpp"

namespace kstroke {

void SegmentConfig::validate() const {
  if (window_size == 0) throw ConfigError("window size must be positive");
  if (overlap >= window_size) {
    throw ConfigError("overlap (" + std::to_string(overlap) + ") must be smaller than window (" +
                      std::to_string(window_size) + ")");
  }
  if (min_tail_fraction < 0.0 || min_tail_fraction > 1.0) {
    throw ConfigError("min_tail_fraction must lie in [0, 1]");
  }
}

std::vector<Window> segment(const Session& session, const SegmentConfig& cfg) {
  cfg.validate();
  const std::size_t n = session.events.size();
  const std::size_t w = cfg.window_size;
  const std::size_t s = cfg.stride();
  std::vector<Window> out;

  auto emit = [&](std::size_t start, std::size_t len) {
    Window win;
    win.session_key = session.key();
    win.user_id = session.user_id;
    win.start_index = start;
    win.label = session.label();
    const auto first = session.events.begin() + static_cast<std::ptrdiff_t>(start);
    win.events.assign(first, first + static_cast<std::ptrdiff_t>(len));
    out.push_back(std::move(win));
  };

  std::size_t start = 0;
  while (start + w <= n) {
    emit(start, w);
    start += s;
  }
  if (start < n) {
    const std::size_t tail = n - start;
    if (static_cast<double>(tail) >= cfg.min_tail_fraction * static_cast<double>(w)) {
      emit(start, tail);
    }
  }
  return out;
}

double shift_fraction(std::span<const KeyEvent> events) {
  if (events.empty()) return 0.0;
  const auto shifts = std::count_if(events.begin(), events.end(), [](const KeyEvent& e) {
    return keymap::is_shift(e.keycode);
  });
  return static_cast<double>(shifts) / static_cast<double>(events.size());
}

std::vector<Window> exclude(std::vector<Window> windows, const SegmentConfig& cfg,
                            std::size_t target_len) {
  const double min_len = cfg.min_length_fraction * static_cast<double>(target_len);
  std::erase_if(windows, [&](const Window& w) {
    return shift_fraction(w.events) > cfg.shift_fraction_max ||
           static_cast<double>(w.events.size()) < min_len;
  });
  return windows;
}

}  // namespace kstroke
