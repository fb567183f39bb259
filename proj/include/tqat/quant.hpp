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

// Ternary weight and integer activation quantization, the lambda blend used
// to phase quantization in, and the lambda(t) schedule.

#include <cstdint>
#include <span>
#include <vector>

#include "tqat/tensor.hpp"

namespace tqat {

struct QuantConfig {
  int activation_bits = 8;
  double eps_scale = 1e-8;

  // Activation codes live in [-q_b, q_b - 1].
  std::int32_t q_b() const { return std::int32_t{1} << (activation_bits - 1); }
  void validate() const;
};

template <typename T>
struct QuantizedWeights {
  Shape shape;
  std::vector<std::int8_t> trits;  // each in {-1, 0, +1}
  T w_scale = T(1);                // 1 / (mean|W| + eps)
};

template <typename T>
struct QuantizedActivations {
  Shape shape;
  std::vector<std::int16_t> q;  // each in [-q_b, q_b - 1]
  T x_scale = T(1);             // (q_b - 1) / (max|x| + eps)
};

// trits = clamp(round(W * w_scale), -1, 1), w_scale = 1 / (mean|W| + eps).
// Rounding is to nearest, ties to even.
template <typename T>
QuantizedWeights<T> quantize_weights(const BasicTensor<T>& w, const QuantConfig& cfg = {});

// trits / w_scale
template <typename T>
BasicTensor<T> dequantize_weights(const QuantizedWeights<T>& qw);

// q = clamp(round(x * x_scale), -q_b, q_b - 1), x_scale = (q_b - 1) / (max|x| + eps).
template <typename T>
QuantizedActivations<T> quantize_activations(std::span<const T> x, const QuantConfig& cfg = {});

template <typename T>
QuantizedActivations<T> quantize_activations(const BasicTensor<T>& x, const QuantConfig& cfg = {});

// q / x_scale
template <typename T>
BasicTensor<T> dequantize_activations(const QuantizedActivations<T>& qa);

// Row-wise activation round trip: every row of x gets its own scale.
// Returns the dequantized rows.
template <typename T>
BasicTensor<T> fake_quantize_rows(const BasicTensor<T>& x, const QuantConfig& cfg = {});

// Forward value of the quantization-strength blend: (1 - lambda) x + lambda x_hat.
// lambda == 0 and lambda == 1 return x and x_hat exactly.
template <typename T>
BasicTensor<T> softquant_value(const BasicTensor<T>& x, const BasicTensor<T>& x_hat, double lambda);

// Trits packed four to a byte. Codes: 00 -> 0, 01 -> +1, 10 -> -1; 11 is
// never written and rejected on read. Trit i sits at bits 2*(i mod 4) of
// byte i/4; the final partial byte is zero-padded.
std::vector<std::uint8_t> pack_trits(std::span<const std::int8_t> trits);
std::vector<std::int8_t> unpack_trits(std::span<const std::uint8_t> bytes, std::size_t count);

// Integer form of fake_quantize_rows(x) * dequantize_weights(W)^T for packed
// trits W [rows x cols]: each row of x is quantized with its own scale, the
// codes are accumulated exactly in 32-bit integers and the sum is divided by
// w_scale * x_scale. Returns [x.rows() x rows].
template <typename T>
BasicTensor<T> ternary_matmul_rows(std::span<const std::uint8_t> packed, std::size_t rows,
                                   std::size_t cols, T w_scale, const BasicTensor<T>& x,
                                   const QuantConfig& cfg = {});

struct ScheduleConfig {
  std::uint64_t s = 0;       // last step with lambda == 0
  std::uint64_t t_star = 0;  // last step of the phase-in
  double steepness = 5.0;

  void validate() const;
};

// 0 for t <= s; 2 * sigmoid(steepness * (t - s) / (t_star - s)) - 1 for
// s < t <= t_star; 1 afterwards.
double lambda_schedule(std::uint64_t t, const ScheduleConfig& cfg);

}  // namespace tqat
