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

#include "tqat/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tqat/error.hpp"
#include "tqat/kernels/kernels.hpp"
#include "tqat/parallel.hpp"

namespace tqat {

void QuantConfig::validate() const {
  if (activation_bits < 2 || activation_bits > 16) {
    throw ContractError("activation_bits must be in [2, 16], got " +
                        std::to_string(activation_bits));
  }
  if (!(eps_scale > 0.0) || !std::isfinite(eps_scale)) {
    throw ContractError("eps_scale must be positive and finite");
  }
}

void ScheduleConfig::validate() const {
  if (s > t_star) {
    throw ContractError("schedule: phase-in start " + std::to_string(s) +
                        " is after the transition step " + std::to_string(t_star));
  }
}

template <typename T>
QuantizedWeights<T> quantize_weights(const BasicTensor<T>& w, const QuantConfig& cfg) {
  if (w.empty()) throw DimensionError("quantize_weights: empty weight tensor");
  double abs_sum = 0.0;
  for (T x : w.data()) abs_sum += std::fabs(static_cast<double>(x));
  const double scale = 1.0 / (abs_sum / static_cast<double>(w.size()) + cfg.eps_scale);

  QuantizedWeights<T> qw;
  qw.shape = w.shape();
  qw.w_scale = static_cast<T>(scale);
  qw.trits.resize(w.size());
  auto src = w.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double r = std::nearbyint(static_cast<double>(src[i]) * scale);
    qw.trits[i] = static_cast<std::int8_t>(std::clamp(r, -1.0, 1.0));
  }
  return qw;
}

template <typename T>
BasicTensor<T> dequantize_weights(const QuantizedWeights<T>& qw) {
  BasicTensor<T> out(qw.shape);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<T>(qw.trits[i]) / qw.w_scale;
  return out;
}

namespace {

template <typename T>
T absmax(std::span<const T> x) {
  if constexpr (std::is_same_v<T, float>) {
    return kernels::active().absmax(x.data(), x.size());
  } else {
    T m = 0;
    for (T v : x) m = std::max(m, std::fabs(v));
    return m;
  }
}

template <typename T>
void quantize_into(std::span<const T> x, T scale, int lo, int hi, std::int16_t* q) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::active().quantize(x.data(), x.size(), scale, lo, hi, q);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T r = std::nearbyint(x[i] * scale);
      q[i] = static_cast<std::int16_t>(std::clamp(r, static_cast<T>(lo), static_cast<T>(hi)));
    }
  }
}

}  // namespace

template <typename T>
QuantizedActivations<T> quantize_activations(std::span<const T> x, const QuantConfig& cfg) {
  if (x.empty()) throw DimensionError("quantize_activations: empty input");
  const std::int32_t qb = cfg.q_b();
  QuantizedActivations<T> qa;
  qa.shape = Shape{x.size()};
  qa.x_scale = static_cast<T>(static_cast<double>(qb - 1) /
                              (static_cast<double>(absmax(x)) + cfg.eps_scale));
  qa.q.resize(x.size());
  quantize_into(x, qa.x_scale, -qb, qb - 1, qa.q.data());
  return qa;
}

template <typename T>
QuantizedActivations<T> quantize_activations(const BasicTensor<T>& x, const QuantConfig& cfg) {
  auto qa = quantize_activations(x.data(), cfg);
  qa.shape = x.shape();
  return qa;
}

template <typename T>
BasicTensor<T> dequantize_activations(const QuantizedActivations<T>& qa) {
  BasicTensor<T> out(qa.shape);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<T>(qa.q[i]) / qa.x_scale;
  return out;
}

template <typename T>
BasicTensor<T> fake_quantize_rows(const BasicTensor<T>& x, const QuantConfig& cfg) {
  BasicTensor<T> out(x.shape());
  const std::size_t cols = x.cols();
  const std::size_t rows = x.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto qa = quantize_activations(x.data().subspan(r * cols, cols), cfg);
    T* o = out.ptr() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) o[j] = static_cast<T>(qa.q[j]) / qa.x_scale;
  }
  return out;
}

namespace {

std::uint8_t encode_trit(std::int8_t t) {
  switch (t) {
    case 0: return 0b00;
    case 1: return 0b01;
    case -1: return 0b10;
    default: throw ContractError("pack: value " + std::to_string(t) + " is not a trit");
  }
}

}  // namespace

std::vector<std::uint8_t> pack_trits(std::span<const std::int8_t> trits) {
  std::vector<std::uint8_t> out((trits.size() + 3) / 4, 0);
  for (std::size_t i = 0; i < trits.size(); ++i) {
    out[i >> 2] |= static_cast<std::uint8_t>(encode_trit(trits[i]) << (2 * (i & 3)));
  }
  return out;
}

std::vector<std::int8_t> unpack_trits(std::span<const std::uint8_t> bytes, std::size_t count) {
  if (bytes.size() != (count + 3) / 4) {
    throw FormatError("unpack: " + std::to_string(bytes.size()) + " bytes cannot hold exactly " +
                      std::to_string(count) + " trits");
  }
  std::vector<std::int8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned code = (bytes[i >> 2] >> (2 * (i & 3))) & 3u;
    if (code == 0b11) throw FormatError("unpack: forbidden code 11 at trit " + std::to_string(i));
    out[i] = code == 0b01 ? 1 : (code == 0b10 ? -1 : 0);
  }
  return out;
}

template <typename T>
BasicTensor<T> ternary_matmul_rows(std::span<const std::uint8_t> packed, std::size_t rows,
                                   std::size_t cols, T w_scale, const BasicTensor<T>& x,
                                   const QuantConfig& cfg) {
  if (x.cols() != cols) {
    throw ContractError("ternary matmul: input has " + std::to_string(x.cols()) +
                        " features, matrix has " + std::to_string(cols) + " columns");
  }
  if (packed.size() != (rows * cols + 3) / 4) {
    throw ContractError("ternary matmul: packed size does not match " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  }
  const std::size_t n = x.rows();
  BasicTensor<T> out(Shape{n, rows});
  parallel_for(n, 16, [&](std::size_t begin, std::size_t end) {
    std::vector<std::int16_t> q((end - begin) * cols);
    std::vector<T> scale(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      auto qa = quantize_activations(x.data().subspan(i * cols, cols), cfg);
      std::copy(qa.q.begin(), qa.q.end(), q.begin() + (i - begin) * cols);
      scale[i - begin] = qa.x_scale;
    }
    std::vector<std::int32_t> acc((end - begin) * rows);
    kernels::active().ternary_gemm(packed.data(), rows, cols, q.data(), end - begin, acc.data());
    for (std::size_t i = begin; i < end; ++i) {
      // One rounding from the exact integer result.
      const double denom = static_cast<double>(w_scale) * static_cast<double>(scale[i - begin]);
      T* o = out.ptr() + i * rows;
      const std::int32_t* a = acc.data() + (i - begin) * rows;
      for (std::size_t r = 0; r < rows; ++r) o[r] = static_cast<T>(a[r] / denom);
    }
  });
  return out;
}

template <typename T>
BasicTensor<T> softquant_value(const BasicTensor<T>& x, const BasicTensor<T>& x_hat, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("softquant: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (x.shape() != x_hat.shape()) {
    throw DimensionError("softquant: shape mismatch " + to_string(x.shape()) + " vs " +
                         to_string(x_hat.shape()));
  }
  if (lambda == 0.0) return x;
  if (lambda == 1.0) return x_hat;
  BasicTensor<T> out(x.shape());
  const T keep = static_cast<T>(1.0 - lambda);
  const T blend = static_cast<T>(lambda);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x[i] + blend * x_hat[i];
  return out;
}

double lambda_schedule(std::uint64_t t, const ScheduleConfig& cfg) {
  if (t <= cfg.s) return 0.0;
  if (t > cfg.t_star) return 1.0;
  const double u = static_cast<double>(t - cfg.s) / static_cast<double>(cfg.t_star - cfg.s);
  return 2.0 / (1.0 + std::exp(-cfg.steepness * u)) - 1.0;
}

#define TQAT_INSTANTIATE(T)                                                                      \
  template QuantizedWeights<T> quantize_weights<T>(const BasicTensor<T>&, const QuantConfig&);  \
  template BasicTensor<T> dequantize_weights<T>(const QuantizedWeights<T>&);                    \
  template QuantizedActivations<T> quantize_activations<T>(std::span<const T>,                  \
                                                           const QuantConfig&);                 \
  template QuantizedActivations<T> quantize_activations<T>(const BasicTensor<T>&,               \
                                                           const QuantConfig&);                 \
  template BasicTensor<T> dequantize_activations<T>(const QuantizedActivations<T>&);            \
  template BasicTensor<T> fake_quantize_rows<T>(const BasicTensor<T>&, const QuantConfig&);     \
  template BasicTensor<T> ternary_matmul_rows<T>(std::span<const std::uint8_t>, std::size_t,     \
                                                 std::size_t, T, const BasicTensor<T>&,          \
                                                 const QuantConfig&);                            \
  template BasicTensor<T> softquant_value<T>(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                             double);

TQAT_INSTANTIATE(float)
TQAT_INSTANTIATE(double)
#undef TQAT_INSTANTIATE

}  // namespace tqat
