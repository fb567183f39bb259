// Copyright 2026 The tqat Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>

namespace tqat::kernels {

inline constexpr unsigned kCodeZero = 0b00;
inline constexpr unsigned kCodePlus = 0b01;
inline constexpr unsigned kCodeMinus = 0b10;

// One packed byte -> four int16 trits, low bits first.
struct TritLut {
  std::array<std::array<std::int16_t, 4>, 256> entries{};
  constexpr TritLut() {
    for (unsigned b = 0; b < 256; ++b) {
      for (unsigned i = 0; i < 4; ++i) {
        const unsigned code = (b >> (2 * i)) & 3u;
        entries[b][i] = code == kCodePlus ? 1 : code == kCodeMinus ? -1 : 0;
      }
    }
  }
};

inline constexpr TritLut kTritLut{};

}  // namespace tqat::kernels
