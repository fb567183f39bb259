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

// Compiled with -mavx2 -mfma. Nothing in here may run before dispatch has
// confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "tqat/kernels/kernels.hpp"
#include "trit_decode.hpp"

namespace tqat::kernels {
namespace {

constexpr std::size_t kNr = 16;  // columns per packed B panel (two ymm)
constexpr std::size_t kMr = 6;   // rows per micro-tile
constexpr std::size_t kMc = 96;  // rows of A kept hot across panels

// Packs columns [j0, j0 + 16) of B into a k x 16 panel, zero-padded.
void pack_panel(std::size_t k, std::size_t ncols, const float* b, std::size_t ldb, float* panel) {
  for (std::size_t p = 0; p < k; ++p) {
    const float* src = b + p * ldb;
    float* dst = panel + p * kNr;
    std::size_t j = 0;
    for (; j < ncols; ++j) dst[j] = src[j];
    for (; j < kNr; ++j) dst[j] = 0.0f;
  }
}

template <std::size_t MR>
void micro_tile(std::size_t k, const float* a, std::size_t lda, const float* panel, float* c,
                std::size_t ldc, std::size_t ncols, bool accumulate) {
  __m256 acc0[MR];
  __m256 acc1[MR];
  alignas(32) float tile[MR][kNr];
  const bool full = ncols == kNr;

  if (accumulate) {
    for (std::size_t r = 0; r < MR; ++r) {
      const float* src = c + r * ldc;
      if (!full) {
        std::fill(tile[r], tile[r] + kNr, 0.0f);
        std::copy(src, src + ncols, tile[r]);
        src = tile[r];
      }
      acc0[r] = _mm256_loadu_ps(src);
      acc1[r] = _mm256_loadu_ps(src + 8);
    }
  } else {
    for (std::size_t r = 0; r < MR; ++r) {
      acc0[r] = _mm256_setzero_ps();
      acc1[r] = _mm256_setzero_ps();
    }
  }

  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_load_ps(panel + p * kNr);
    const __m256 b1 = _mm256_load_ps(panel + p * kNr + 8);
#pragma GCC unroll 6
    for (std::size_t r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
      acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
    }
  }

  for (std::size_t r = 0; r < MR; ++r) {
    float* dst = c + r * ldc;
    if (full) {
      _mm256_storeu_ps(dst, acc0[r]);
      _mm256_storeu_ps(dst + 8, acc1[r]);
    } else {
      _mm256_store_ps(tile[r], acc0[r]);
      _mm256_store_ps(tile[r] + 8, acc1[r]);
      std::copy(tile[r], tile[r] + ncols, dst);
    }
  }
}

// Full 6 x 16 tile with all twelve accumulators in named registers; the
// generic template spills them on gcc.
void micro_6x16(std::size_t k, const float* a, std::size_t lda, const float* panel, float* c,
                std::size_t ldc, bool accumulate) {
  __m256 c00, c01, c10, c11, c20, c21, c30, c31, c40, c41, c50, c51;
  if (accumulate) {
    c00 = _mm256_loadu_ps(c + 0 * ldc); c01 = _mm256_loadu_ps(c + 0 * ldc + 8);
    c10 = _mm256_loadu_ps(c + 1 * ldc); c11 = _mm256_loadu_ps(c + 1 * ldc + 8);
    c20 = _mm256_loadu_ps(c + 2 * ldc); c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
    c30 = _mm256_loadu_ps(c + 3 * ldc); c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
    c40 = _mm256_loadu_ps(c + 4 * ldc); c41 = _mm256_loadu_ps(c + 4 * ldc + 8);
    c50 = _mm256_loadu_ps(c + 5 * ldc); c51 = _mm256_loadu_ps(c + 5 * ldc + 8);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = c40 = c41 = c50 = c51 = _mm256_setzero_ps();
  }
  const float* a0 = a;
  const float* a1 = a + lda;
  const float* a2 = a + 2 * lda;
  const float* a3 = a + 3 * lda;
  const float* a4 = a + 4 * lda;
  const float* a5 = a + 5 * lda;
  for (std::size_t p = 0; p < k; ++p, panel += kNr) {
    const __m256 b0 = _mm256_load_ps(panel);
    const __m256 b1 = _mm256_load_ps(panel + 8);
    __m256 av = _mm256_broadcast_ss(a0 + p);
    c00 = _mm256_fmadd_ps(av, b0, c00); c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a1 + p);
    c10 = _mm256_fmadd_ps(av, b0, c10); c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a2 + p);
    c20 = _mm256_fmadd_ps(av, b0, c20); c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a3 + p);
    c30 = _mm256_fmadd_ps(av, b0, c30); c31 = _mm256_fmadd_ps(av, b1, c31);
    av = _mm256_broadcast_ss(a4 + p);
    c40 = _mm256_fmadd_ps(av, b0, c40); c41 = _mm256_fmadd_ps(av, b1, c41);
    av = _mm256_broadcast_ss(a5 + p);
    c50 = _mm256_fmadd_ps(av, b0, c50); c51 = _mm256_fmadd_ps(av, b1, c51);
  }
  _mm256_storeu_ps(c + 0 * ldc, c00); _mm256_storeu_ps(c + 0 * ldc + 8, c01);
  _mm256_storeu_ps(c + 1 * ldc, c10); _mm256_storeu_ps(c + 1 * ldc + 8, c11);
  _mm256_storeu_ps(c + 2 * ldc, c20); _mm256_storeu_ps(c + 2 * ldc + 8, c21);
  _mm256_storeu_ps(c + 3 * ldc, c30); _mm256_storeu_ps(c + 3 * ldc + 8, c31);
  _mm256_storeu_ps(c + 4 * ldc, c40); _mm256_storeu_ps(c + 4 * ldc + 8, c41);
  _mm256_storeu_ps(c + 5 * ldc, c50); _mm256_storeu_ps(c + 5 * ldc + 8, c51);
}

void micro_dispatch(std::size_t rows, std::size_t k, const float* a, std::size_t lda,
                    const float* panel, float* c, std::size_t ldc, std::size_t ncols,
                    bool accumulate) {
  switch (rows) {
    case 6:
      if (ncols == kNr) {
        micro_6x16(k, a, lda, panel, c, ldc, accumulate);
      } else {
        micro_tile<6>(k, a, lda, panel, c, ldc, ncols, accumulate);
      }
      break;
    case 5: micro_tile<5>(k, a, lda, panel, c, ldc, ncols, accumulate); break;
    case 4: micro_tile<4>(k, a, lda, panel, c, ldc, ncols, accumulate); break;
    case 3: micro_tile<3>(k, a, lda, panel, c, ldc, ncols, accumulate); break;
    case 2: micro_tile<2>(k, a, lda, panel, c, ldc, ncols, accumulate); break;
    case 1: micro_tile<1>(k, a, lda, panel, c, ldc, ncols, accumulate); break;
    default: break;
  }
}

void sgemm_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0f);
    }
    return;
  }
  const std::size_t panels = (n + kNr - 1) / kNr;
  const std::size_t panel_size = k * kNr;
  thread_local std::vector<float> scratch;
  // 32-byte alignment for _mm256_load_ps on the packed panels.
  scratch.resize(panels * panel_size + 8);
  float* base = scratch.data();
  while (reinterpret_cast<std::uintptr_t>(base) % 32 != 0) ++base;

  for (std::size_t jp = 0; jp < panels; ++jp) {
    const std::size_t j0 = jp * kNr;
    pack_panel(k, std::min(kNr, n - j0), b + j0, ldb, base + jp * panel_size);
  }

  for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
    const std::size_t i1 = std::min(m, i0 + kMc);
    for (std::size_t jp = 0; jp < panels; ++jp) {
      const std::size_t j0 = jp * kNr;
      const std::size_t ncols = std::min(kNr, n - j0);
      const float* panel = base + jp * panel_size;
      for (std::size_t i = i0; i < i1; i += kMr) {
        const std::size_t rows = std::min(kMr, i1 - i);
        micro_dispatch(rows, k, a + i * lda, lda, panel, c + i * ldc + j0, ldc, ncols, accumulate);
      }
    }
  }
}

inline std::int32_t hsum_epi32(__m256i v) {
  __m128i s = _mm_add_epi32(_mm256_castsi256_si128(v), _mm256_extracti128_si256(v, 1));
  s = _mm_add_epi32(s, _mm_shuffle_epi32(s, _MM_SHUFFLE(1, 0, 3, 2)));
  s = _mm_add_epi32(s, _mm_shuffle_epi32(s, _MM_SHUFFLE(2, 3, 0, 1)));
  return _mm_cvtsi128_si32(s);
}

void decode_row(const std::uint8_t* packed, std::size_t row, std::size_t cols, std::int16_t* dst) {
  std::size_t idx = row * cols;
  std::size_t j = 0;
  // Leading trits until the stream is byte aligned.
  for (; j < cols && (idx & 3u) != 0; ++j, ++idx) {
    dst[j] = kTritLut.entries[packed[idx >> 2]][idx & 3u];
  }
  for (; j + 4 <= cols; j += 4, idx += 4) {
    std::memcpy(dst + j, kTritLut.entries[packed[idx >> 2]].data(), 4 * sizeof(std::int16_t));
  }
  for (; j < cols; ++j, ++idx) {
    dst[j] = kTritLut.entries[packed[idx >> 2]][idx & 3u];
  }
}

void ternary_gemm_avx2(const std::uint8_t* packed, std::size_t rows, std::size_t cols,
                       const std::int16_t* q, std::size_t n_act, std::int32_t* out) {
  constexpr std::size_t kActBlock = 32;
  const std::size_t vec_cols = cols / 16 * 16;
  const __m256i ones = _mm256_set1_epi16(1);
  thread_local std::vector<std::int16_t> trow;
  trow.resize(cols);

  for (std::size_t i0 = 0; i0 < n_act; i0 += kActBlock) {
    const std::size_t i1 = std::min(n_act, i0 + kActBlock);
    for (std::size_t r = 0; r < rows; ++r) {
      decode_row(packed, r, cols, trow.data());
      for (std::size_t i = i0; i < i1; ++i) {
        const std::int16_t* qi = q + i * cols;
        __m256i acc = _mm256_setzero_si256();
        std::size_t j = 0;
        for (; j < vec_cols; j += 16) {
          const __m256i t = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(trow.data() + j));
          const __m256i x = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(qi + j));
          // sign() keeps, negates or zeroes each activation: add/subtract/skip.
          const __m256i s = _mm256_sign_epi16(x, t);
          acc = _mm256_add_epi32(acc, _mm256_madd_epi16(s, ones));
        }
        std::int32_t total = hsum_epi32(acc);
        for (; j < cols; ++j) {
          if (trow[j] > 0) {
            total += qi[j];
          } else if (trow[j] < 0) {
            total -= qi[j];
          }
        }
        out[i * rows + r] = total;
      }
    }
  }
}

float absmax_avx2(const float* x, std::size_t n) {
  const __m256 abs_mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  __m256 m = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) m = _mm256_max_ps(m, _mm256_and_ps(_mm256_loadu_ps(x + i), abs_mask));
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, m);
  float best = 0.0f;
  for (float v : lanes) best = std::max(best, v);
  for (; i < n; ++i) best = std::max(best, std::fabs(x[i]));
  return best;
}

void quantize_avx2(const float* x, std::size_t n, float scale, int lo, int hi, std::int16_t* q) {
  const float flo = static_cast<float>(lo);
  const float fhi = static_cast<float>(hi);
  const __m256 vs = _mm256_set1_ps(scale);
  const __m256 vlo = _mm256_set1_ps(flo);
  const __m256 vhi = _mm256_set1_ps(fhi);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 r = _mm256_round_ps(_mm256_mul_ps(_mm256_loadu_ps(x + i), vs),
                               _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    r = _mm256_max_ps(_mm256_min_ps(r, vhi), vlo);
    __m256i p = _mm256_packs_epi32(_mm256_cvtps_epi32(r), _mm256_setzero_si256());
    p = _mm256_permute4x64_epi64(p, 0b1000);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(q + i), _mm256_castsi256_si128(p));
  }
  for (; i < n; ++i) {
    const float r = std::nearbyint(x[i] * scale);
    q[i] = static_cast<std::int16_t>(std::clamp(r, flo, fhi));
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Isa::avx2, sgemm_avx2, ternary_gemm_avx2, absmax_avx2,
                                 quantize_avx2};
  return table;
}

}  // namespace tqat::kernels
