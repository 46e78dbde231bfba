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

// US-layout keycode table. Keycodes follow the browser/Win32 virtual-key
// numbering, which fits in [0, 255]:
//
//   8 Backspace   9 Tab   13 Enter   16/160/161 Shift   32 Space
//   48-57 digits  65-90 letters
//   186 ;:  187 =+  188 ,<  189 -_  190 .>  191 /?  192 `~
//   219 [{  220 \|  221 ]}  222 '"
//
// Other layouts are not supported.

#ifndef KSTROKE_KEYMAP_HPP_
#define KSTROKE_KEYMAP_HPP_

#include <optional>

namespace kstroke::keymap {

inline constexpr int kBackspace = 8;
inline constexpr int kTab = 9;
inline constexpr int kEnter = 13;
inline constexpr int kShift = 16;
inline constexpr int kLeftShift = 160;
inline constexpr int kRightShift = 161;
inline constexpr int kSpace = 32;

inline constexpr bool is_shift(int keycode) {
  return keycode == kShift || keycode == kLeftShift || keycode == kRightShift;
}

inline constexpr bool is_letter(int keycode) { return keycode >= 65 && keycode <= 90; }

// Character produced by `keycode` with the given shift state, if printable.
std::optional<char> to_char(int keycode, bool shifted);

struct KeyStroke {
  int keycode;
  bool shift;
};

// Inverse lookup: the key (and shift state) that types `c`.
std::optional<KeyStroke> from_char(char c);

}  // namespace kstroke::keymap

#endif  // KSTROKE_KEYMAP_HPP_
