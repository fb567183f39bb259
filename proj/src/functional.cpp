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

#include "tqat/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tqat/linalg.hpp"

namespace tqat::functional {

template <typename T>
void rmsnorm_rows(const T* x, std::size_t rows, std::size_t d, double eps, T* y, T* inv_rms) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(xr[j]) * xr[j];
    const double inv = 1.0 / std::sqrt(sq / static_cast<double>(d) + eps);
    T* yr = y + r * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = static_cast<T>(xr[j] * inv);
    if (inv_rms) inv_rms[r] = static_cast<T>(inv);
  }
}

template <typename T>
void softmax_row(const T* x, std::size_t n, std::size_t valid, T* y) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < valid; ++j) mx = std::max(mx, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < valid; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  const T inv = static_cast<T>(1.0 / total);
  for (std::size_t j = 0; j < valid; ++j) y[j] *= inv;
  for (std::size_t j = valid; j < n; ++j) y[j] = T(0);
}

template <typename T>
T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <typename T>
void attention_forward(const T* q, const T* k, const T* v, std::size_t batch, std::size_t seq,
                       std::size_t heads, std::size_t d, T* out, T* probs) {
  const std::size_t dh = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<T> scores(seq * seq);
  std::vector<T> local;
  if (!probs) local.resize(seq * seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * seq * d + h * dh;
      T* p = probs ? probs + (b * heads + h) * seq * seq : local.data();
      linalg::gemm<T>(linalg::Op::none, linalg::Op::transpose, seq, seq, dh, q + off, d, k + off, d,
                      scores.data(), seq, false);
      for (std::size_t i = 0; i < seq; ++i) {
        T* row = scores.data() + i * seq;
        for (std::size_t j = 0; j <= i; ++j) row[j] *= scale;
        softmax_row(row, seq, i + 1, p + i * seq);
      }
      linalg::gemm<T>(linalg::Op::none, linalg::Op::none, seq, dh, seq, p, seq, v + off, d,
                      out + off, d, false);
    }
  }
}

#define TQAT_INSTANTIATE(T)                                                                     \
  template void rmsnorm_rows<T>(const T*, std::size_t, std::size_t, double, T*, T*);           \
  template void softmax_row<T>(const T*, std::size_t, std::size_t, T*);                        \
  template T silu<T>(T);                                                                       \
  template void attention_forward<T>(const T*, const T*, const T*, std::size_t, std::size_t,   \
                                     std::size_t, std::size_t, T*, T*);

TQAT_INSTANTIATE(float)
TQAT_INSTANTIATE(double)
#undef TQAT_INSTANTIATE

}  // namespace tqat::functional
