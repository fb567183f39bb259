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

// Data-parallel inner loops. Every kernel has a portable scalar reference
// and, where the build and the CPU allow it, an AVX2/FMA variant. The
// variant is chosen once per process; `TQAT_KERNELS=scalar|avx2` overrides
// the CPU probe.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace tqat::kernels {

enum class Isa { scalar, avx2 };

std::string_view name(Isa isa);

struct KernelTable {
  Isa isa;

  // C[m x n] = A[m x k] * B[k x n] (or += when accumulate). Row-major with
  // leading dimensions. Each C element is accumulated over k in index order.
  void (*sgemm)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);

  // out[i * rows + r] = sum_j trit(r, j) * q[i * cols + j] for each of the
  // n_act activation rows. `packed` holds the row-major 2-bit trit stream
  // (00 -> 0, 01 -> +1, 10 -> -1). Pure integer add/subtract.
  void (*ternary_gemm)(const std::uint8_t* packed, std::size_t rows, std::size_t cols,
                       const std::int16_t* q, std::size_t n_act, std::int32_t* out);

  // max_i |x_i|
  float (*absmax)(const float* x, std::size_t n);

  // q_i = clamp(round_half_even(x_i * scale), lo, hi)
  void (*quantize)(const float* x, std::size_t n, float scale, int lo, int hi, std::int16_t* q);
};

const KernelTable& scalar_table();

// nullptr when the AVX2 variant was not built or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The process-wide selection.
const KernelTable& active();

}  // namespace tqat::kernels
