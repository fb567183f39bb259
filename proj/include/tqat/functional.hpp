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

// Forward-only numerical building blocks shared by the autodiff ops and the
// packed inference path, so both evaluate the non-linear parts identically.

#include <cstddef>
#include <vector>

namespace tqat::functional {

// y = x / sqrt(mean(x^2) + eps) per row of length d. inv_rms (optional)
// receives 1 / sqrt(mean(x^2) + eps) per row.
template <typename T>
void rmsnorm_rows(const T* x, std::size_t rows, std::size_t d, double eps, T* y, T* inv_rms);

// Numerically stabilised softmax over the first `valid` entries of a row;
// entries past `valid` are set to zero.
template <typename T>
void softmax_row(const T* x, std::size_t n, std::size_t valid, T* y);

template <typename T>
T silu(T x);

// Causal multi-head attention for q, k, v laid out [batch*seq x d]. Writes
// out [batch*seq x d]; when probs is non-null it receives the attention
// weights [batch x heads x seq x seq].
template <typename T>
void attention_forward(const T* q, const T* k, const T* v, std::size_t batch, std::size_t seq,
                       std::size_t heads, std::size_t d, T* out, T* probs);

}  // namespace tqat::functional
