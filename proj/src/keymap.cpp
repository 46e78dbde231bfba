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

#include "kstroke/keymap.hpp"

#include <array>

namespace kstroke::keymap {
namespace {

struct Entry {
  int keycode;
  char plain;
  char shifted;
};

constexpr std::array<Entry, 26> kSymbols = {{
    {kTab, '\t', '\t'},   {kEnter, '\n', '\n'}, {kSpace, ' ', ' '},
    {48, '0', ')'},       {49, '1', '!'},       {50, '2', '@'},
    {51, '3', '#'},       {52, '4', '$'},       {53, '5', '%'},
    {54, '6', '^'},       {55, '7', '&'},       {56, '8', '*'},
    {57, '9', '('},       {186, ';', ':'},      {187, '=', '+'},
    {188, ',', '<'},      {189, '-', '_'},      {190, '.', '>'},
    {191, '/', '?'},      {192, '`', '~'},      {219, '[', '{'},
    {220, '\\', '|'},     {221, ']', '}'},      {222, '\'', '"'},
    {kBackspace, 0, 0},   {kShift, 0, 0},
}};

}  // namespace

std::optional<char> to_char(int keycode, bool shifted) {
  if (is_letter(keycode)) {
    const char lower = static_cast<char>('a' + (keycode - 65));
    return shifted ? static_cast<char>(lower - 'a' + 'A') : lower;
  }
  for (const Entry& e : kSymbols) {
    if (e.keycode == keycode && e.plain != 0) return shifted ? e.shifted : e.plain;
  }
  return std::nullopt;
}

std::optional<KeyStroke> from_char(char c) {
  if (c >= 'a' && c <= 'z') return KeyStroke{65 + (c - 'a'), false};
  if (c >= 'A' && c <= 'Z') return KeyStroke{65 + (c - 'A'), true};
  for (const Entry& e : kSymbols) {
    if (e.plain == 0) continue;
    if (e.plain == c) return KeyStroke{e.keycode, false};
    if (e.shifted == c) return KeyStroke{e.keycode, true};
  }
  return std::nullopt;
}

}  // namespace kstroke::keymap
