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

// Deployment form of a ternary model: trits packed four to a byte, linear
// layers evaluated with integer add/subtract accumulation.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tqat/nn.hpp"
#include "tqat/quant.hpp"
#include "tqat/tensor.hpp"

namespace tqat {

struct Checkpoint;

class PackedTernaryMatrix {
 public:
  PackedTernaryMatrix() = default;

  // trits is row-major [rows x cols].
  static PackedTernaryMatrix pack(std::span<const std::int8_t> trits, std::size_t rows,
                                  std::size_t cols, float w_scale);
  static PackedTernaryMatrix pack(const QuantizedWeights<float>& qw);
  // Validates the byte count and every code.
  static PackedTernaryMatrix from_bytes(std::size_t rows, std::size_t cols, float w_scale,
                                        std::vector<std::uint8_t> bytes);

  std::vector<std::int8_t> unpack() const;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  float w_scale() const noexcept { return w_scale_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

  bool operator==(const PackedTernaryMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  float w_scale_ = 1.0f;
  std::vector<std::uint8_t> bytes_;
};

// out_r = acc_r / (w_scale * x_scale) with acc_r the exact integer sum of
// +q_j over trit +1 and -q_j over trit -1.
Tensor ternary_matvec(const PackedTernaryMatrix& pm, const QuantizedActivations<float>& q);

// Quantizes every row of x [n x cols] with its own scale and applies pm;
// returns [n x rows].
Tensor ternary_linear(const PackedTernaryMatrix& pm, const Tensor& x, const QuantConfig& quant = {});

struct PackedLayer {
  std::string name;
  PackedTernaryMatrix weight;
};

class PackedModel final : public LanguageModel {
 public:
  // Quantizes the model's shadow weights once.
  static PackedModel from_model(const TransformerModel<float>& model);
  // Requires a checkpoint whose final phase is quantized unless force.
  static PackedModel from_checkpoint(const Checkpoint& ckpt, bool force = false);

  std::vector<std::uint8_t> encode() const;
  static PackedModel decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static PackedModel load(const std::filesystem::path& path);

  const ModelConfig& config() const override { return cfg_; }
  Tensor logits(std::span<const Token> tokens, std::size_t batch, std::size_t seq) const override;

  const std::vector<PackedLayer>& layers() const noexcept { return layers_; }
  // Bytes of the packed linear layers (trits plus one f32 scale each) and
  // of the same layers stored as f32.
  std::size_t linear_bytes_packed() const;
  std::size_t linear_bytes_float() const;

 private:
  ModelConfig cfg_;
  QuantConfig quant_;
  std::vector<PackedLayer> layers_;  // per block: q, k, v, o, up, down
  Tensor tok_emb_;
  Tensor pos_emb_;
  Tensor head_;
};

struct BenchReport {
  double tokens_per_s_packed = 0.0;
  double tokens_per_s_float = 0.0;
  std::size_t bytes_packed = 0;
  std::size_t bytes_float = 0;
  std::size_t trials = 0;
};

// Median throughput over `trials` (at least 5) timed forward passes of each
// model; the float reference runs in full precision. Memory figures come
// from the storage format.
BenchReport bench(const PackedModel& packed, const TransformerModel<float>& reference,
                  std::size_t batch, std::size_t seq, std::size_t trials = 5);

}  // namespace tqat
