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

#include "tqat/linalg.hpp"

#include <algorithm>
#include <vector>

#include "tqat/kernels/kernels.hpp"
#include "tqat/parallel.hpp"

namespace tqat::linalg {
namespace {

template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, std::size_t ld,
                    std::vector<T>& dst) {
  // src is rows x cols (leading dim ld); dst becomes cols x rows, dense.
  dst.resize(rows * cols);
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t j = j0; j < j1; ++j) {
        T* out = dst.data() + j * rows;
        for (std::size_t i = i0; i < i1; ++i) out[i] = src[i * ld + j];
      }
    }
  }
}

template <typename T>
void gemm_reference(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                    const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  thread_local std::vector<T> a_buf;
  thread_local std::vector<T> b_buf;
  if (op_a == Op::transpose) {
    transpose_into(k, m, a, lda, a_buf);
    a = a_buf.data();
    lda = k;
  }
  if (op_b == Op::transpose) {
    transpose_into(n, k, b, ldb, b_buf);
    b = b_buf.data();
    ldb = n;
  }
  if constexpr (std::is_same_v<T, float>) {
    const auto& kt = kernels::active();
    parallel_for(m, 64, [&](std::size_t begin, std::size_t end) {
      kt.sgemm(end - begin, n, k, a + begin * lda, lda, b, ldb, c + begin * ldc, ldc, accumulate);
    });
  } else {
    gemm_reference(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

template void gemm<float>(Op, Op, std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                          const float*, std::size_t, float*, std::size_t, bool);
template void gemm<double>(Op, Op, std::size_t, std::size_t, std::size_t, const double*,
                           std::size_t, const double*, std::size_t, double*, std::size_t, bool);

}  // namespace tqat::linalg
