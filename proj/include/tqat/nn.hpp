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

// BitLinear and a small decoder-only transformer whose attention and
// feed-forward projections are all BitLinear layers.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tqat/autograd.hpp"
#include "tqat/quant.hpp"
#include "tqat/tensor.hpp"

namespace tqat {

struct ModelConfig {
  std::uint32_t vocab_size = 256;
  std::uint32_t d_model = 128;
  std::uint32_t n_layers = 2;
  std::uint32_t n_heads = 4;
  std::uint32_t max_seq_len = 128;
  std::uint32_t ffn_multiplier = 4;
  bool tie_embeddings = false;

  std::uint32_t d_ffn() const { return d_model * ffn_multiplier; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class LinearMode : std::uint8_t { full_precision = 0, soft = 1, quantized = 2 };

std::string_view to_string(LinearMode mode);
LinearMode parse_linear_mode(std::string_view text);

// Forward-only view of a language model; both the training graph and the
// packed integer engine implement it.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual const ModelConfig& config() const = 0;
  // Logits [batch*seq x vocab] for row-major token ids [batch x seq].
  virtual Tensor logits(std::span<const Token> tokens, std::size_t batch, std::size_t seq) const = 0;
};

// Shadow weights W [out x in] plus the quantization behaviour of the
// current phase. The input is RMS-normalised in every mode.
template <typename T>
class BitLinear {
 public:
  BitLinear(std::string name, std::size_t in_features, std::size_t out_features,
            QuantConfig quant = {});

  // y = norm(x) W^T in full precision; otherwise both operands go through
  // softquant with strength lambda (1 in quantized mode).
  Var<T> forward(Var<T> x, Var<T> w) const;

  void set_mode(LinearMode mode, double lambda = 0.0);
  LinearMode mode() const noexcept { return mode_; }
  double lambda() const noexcept { return lambda_; }
  // Strength actually applied in the forward pass.
  double effective_lambda() const noexcept;

  Parameter<T>& weight() noexcept { return weight_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  const QuantConfig& quant_config() const noexcept { return quant_; }
  std::size_t in_features() const noexcept { return weight_.value.shape()[1]; }
  std::size_t out_features() const noexcept { return weight_.value.shape()[0]; }

 private:
  Parameter<T> weight_;
  QuantConfig quant_;
  LinearMode mode_ = LinearMode::full_precision;
  double lambda_ = 0.0;
};

template <typename T>
struct TransformerBlock {
  BitLinear<T> q, k, v, o, up, down;
};

template <typename T>
class TransformerModel final : public LanguageModel {
 public:
  explicit TransformerModel(ModelConfig cfg, QuantConfig quant = {});

  // normal(0, 0.02) for every weight matrix, zeros for position embeddings.
  void init(std::mt19937_64& rng);

  // Logits [batch x seq x vocab] with gradients reaching the parameters.
  Var<T> forward(Tape<T>& tape, std::span<const Token> tokens, std::size_t batch,
                 std::size_t seq);

  // Same graph with the parameters entering as constants.
  Var<T> forward_const(Tape<T>& tape, std::span<const Token> tokens, std::size_t batch,
                       std::size_t seq) const;

  const ModelConfig& config() const override { return cfg_; }
  Tensor logits(std::span<const Token> tokens, std::size_t batch, std::size_t seq) const override;

  // Switches every BitLinear layer; weights are untouched.
  void set_mode(LinearMode mode, double lambda = 0.0);
  LinearMode mode() const noexcept { return mode_; }
  double lambda() const noexcept { return lambda_; }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;

  std::vector<const BitLinear<T>*> linear_layers() const;
  const std::vector<TransformerBlock<T>>& blocks() const noexcept { return blocks_; }
  const Parameter<T>& token_embedding() const noexcept { return tok_emb_; }
  const Parameter<T>& position_embedding() const noexcept { return pos_emb_; }
  // The output projection ([vocab x d]); the token embedding when tied.
  const Parameter<T>& head() const noexcept { return cfg_.tie_embeddings ? tok_emb_ : head_; }

 private:
  template <typename Leaf>
  Var<T> build(std::span<const Token> tokens, std::size_t batch, std::size_t seq,
               Leaf&& leaf) const;

  ModelConfig cfg_;
  QuantConfig quant_;
  Parameter<T> tok_emb_;
  Parameter<T> pos_emb_;
  Parameter<T> head_;
  std::vector<TransformerBlock<T>> blocks_;
  LinearMode mode_ = LinearMode::full_precision;
  double lambda_ = 0.0;
};

}  // namespace tqat
