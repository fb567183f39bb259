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

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tqat/kernels/kernels.hpp"
#include "trit_decode.hpp"

namespace tqat::kernels {
namespace {

void sgemm_scalar(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                  const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, 0.0f);
    const float* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void ternary_gemm_scalar(const std::uint8_t* packed, std::size_t rows, std::size_t cols,
                         const std::int16_t* q, std::size_t n_act, std::int32_t* out) {
  for (std::size_t i = 0; i < n_act; ++i) {
    const std::int16_t* qi = q + i * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      std::int32_t acc = 0;
      std::size_t idx = r * cols;
      for (std::size_t j = 0; j < cols; ++j, ++idx) {
        const unsigned code = (packed[idx >> 2] >> ((idx & 3u) * 2u)) & 3u;
        if (code == kCodePlus) {
          acc += qi[j];
        } else if (code == kCodeMinus) {
          acc -= qi[j];
        }
      }
      out[i * rows + r] = acc;
    }
  }
}

float absmax_scalar(const float* x, std::size_t n) {
  float m = 0.0f;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
  return m;
}

void quantize_scalar(const float* x, std::size_t n, float scale, int lo, int hi, std::int16_t* q) {
  const float flo = static_cast<float>(lo);
  const float fhi = static_cast<float>(hi);
  for (std::size_t i = 0; i < n; ++i) {
    const float r = std::nearbyint(x[i] * scale);
    q[i] = static_cast<std::int16_t>(std::clamp(r, flo, fhi));
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, sgemm_scalar, ternary_gemm_scalar, absmax_scalar,
                                 quantize_scalar};
  return table;
}

}  // namespace tqat::kernels
