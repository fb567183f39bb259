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

#include "tqat/nn.hpp"

#include <string>

#include "tqat/error.hpp"

namespace tqat {

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || max_seq_len == 0 ||
      ffn_multiplier == 0) {
    throw ContractError("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ContractError("model config: d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::string_view to_string(LinearMode mode) {
  switch (mode) {
    case LinearMode::full_precision: return "full_precision";
    case LinearMode::soft: return "soft";
    case LinearMode::quantized: return "quantized";
  }
  return "unknown";
}

LinearMode parse_linear_mode(std::string_view text) {
  if (text == "full_precision") return LinearMode::full_precision;
  if (text == "soft") return LinearMode::soft;
  if (text == "quantized") return LinearMode::quantized;
  throw FormatError("unknown linear mode '" + std::string(text) + "'");
}

template <typename T>
BitLinear<T>::BitLinear(std::string name, std::size_t in_features, std::size_t out_features,
                        QuantConfig quant)
    : weight_{std::move(name), BasicTensor<T>(Shape{out_features, in_features}), {}},
      quant_(quant) {
  quant_.validate();
}

template <typename T>
void BitLinear<T>::set_mode(LinearMode mode, double lambda) {
  if (mode == LinearMode::soft && !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("set_mode: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  mode_ = mode;
  lambda_ = mode == LinearMode::soft ? lambda : (mode == LinearMode::quantized ? 1.0 : 0.0);
}

template <typename T>
double BitLinear<T>::effective_lambda() const noexcept {
  switch (mode_) {
    case LinearMode::full_precision: return 0.0;
    case LinearMode::quantized: return 1.0;
    case LinearMode::soft: return lambda_;
  }
  return 0.0;
}

template <typename T>
Var<T> BitLinear<T>::forward(Var<T> x, Var<T> w) const {
  if (x.value().cols() != in_features()) {
    throw DimensionError("BitLinear " + weight_.name + ": input feature dim " +
                         std::to_string(x.value().cols()) + " != " +
                         std::to_string(in_features()));
  }
  Var<T> normed = ops::rmsnorm(x);
  if (mode_ == LinearMode::full_precision) return ops::matmul_nt(normed, w);

  const double lambda = effective_lambda();
  const QuantizedWeights<T> qw = quantize_weights(w.value(), quant_);
  const BasicTensor<T> x_hat = fake_quantize_rows(normed.value(), quant_);
  const BasicTensor<T> w_hat = dequantize_weights(qw);
  Var<T> xq = ops::softquant(normed, x_hat, lambda);
  Var<T> wq = ops::softquant(w, w_hat, lambda);
  if (lambda < 1.0) return ops::matmul_nt(xq, wq);
  // Fully quantized: take the value from the integer path the packed engine
  // uses, so training and deployment see identical activations.
  return ops::matmul_nt_exact(
      xq, wq,
      ternary_matmul_rows<T>(pack_trits(qw.trits), out_features(), in_features(), qw.w_scale,
                             normed.value(), quant_));
}

template <typename T>
TransformerModel<T>::TransformerModel(ModelConfig cfg, QuantConfig quant)
    : cfg_(cfg), quant_(quant) {
  cfg_.validate();
  quant_.validate();
  const std::size_t d = cfg_.d_model, f = cfg_.d_ffn();
  tok_emb_ = {"tok_emb", BasicTensor<T>(Shape{cfg_.vocab_size, d}), {}};
  pos_emb_ = {"pos_emb", BasicTensor<T>(Shape{cfg_.max_seq_len, d}), {}};
  if (!cfg_.tie_embeddings) head_ = {"head", BasicTensor<T>(Shape{cfg_.vocab_size, d}), {}};
  blocks_.reserve(cfg_.n_layers);
  for (std::uint32_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    blocks_.push_back(TransformerBlock<T>{
        BitLinear<T>(p + "attn.q", d, d, quant_), BitLinear<T>(p + "attn.k", d, d, quant_),
        BitLinear<T>(p + "attn.v", d, d, quant_), BitLinear<T>(p + "attn.o", d, d, quant_),
        BitLinear<T>(p + "ffn.up", d, f, quant_), BitLinear<T>(p + "ffn.down", f, d, quant_)});
  }
}

template <typename T>
void TransformerModel<T>::init(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.02);
  for (Parameter<T>* p : parameters()) {
    if (p == &pos_emb_) {
      for (auto& x : p->value.data()) x = T(0);
      continue;
    }
    for (auto& x : p->value.data()) x = static_cast<T>(normal(rng));
  }
}

template <typename T>
template <typename Leaf>
Var<T> TransformerModel<T>::build(std::span<const Token> tokens, std::size_t batch,
                                  std::size_t seq, Leaf&& leaf) const {
  if (seq == 0 || batch == 0) throw ContractError("model forward: empty batch");
  if (seq > cfg_.max_seq_len) {
    throw ContractError("model forward: sequence length " + std::to_string(seq) +
                        " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  if (tokens.size() != batch * seq) {
    throw DimensionError("model forward: expected " + std::to_string(batch * seq) +
                         " tokens, got " + std::to_string(tokens.size()));
  }
  for (Token t : tokens) {
    if (t < 0 || static_cast<std::uint32_t>(t) >= cfg_.vocab_size) {
      throw ContractError("model forward: token id " + std::to_string(t) + " outside vocabulary");
    }
  }
  std::vector<Token> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<Token>(i % seq);

  Var<T> tok_table = leaf(tok_emb_);
  Var<T> x = ops::add(ops::embedding(tok_table, tokens), ops::embedding(leaf(pos_emb_), positions));
  for (const auto& blk : blocks_) {
    Var<T> q = blk.q.forward(x, leaf(blk.q.weight()));
    Var<T> k = blk.k.forward(x, leaf(blk.k.weight()));
    Var<T> v = blk.v.forward(x, leaf(blk.v.weight()));
    Var<T> att = ops::causal_attention(q, k, v, batch, seq, cfg_.n_heads);
    x = ops::add(x, blk.o.forward(att, leaf(blk.o.weight())));
    Var<T> h = ops::silu(blk.up.forward(x, leaf(blk.up.weight())));
    x = ops::add(x, blk.down.forward(h, leaf(blk.down.weight())));
  }
  Var<T> head = cfg_.tie_embeddings ? tok_table : leaf(head_);
  Var<T> logits = ops::matmul_nt(ops::rmsnorm(x), head);
  return ops::reshape(logits, Shape{batch, seq, cfg_.vocab_size});
}

template <typename T>
Var<T> TransformerModel<T>::forward(Tape<T>& tape, std::span<const Token> tokens,
                                    std::size_t batch, std::size_t seq) {
  return build(tokens, batch, seq,
               [&tape](const Parameter<T>& p) { return tape.parameter(const_cast<Parameter<T>&>(p)); });
}

template <typename T>
Var<T> TransformerModel<T>::forward_const(Tape<T>& tape, std::span<const Token> tokens,
                                          std::size_t batch, std::size_t seq) const {
  return build(tokens, batch, seq,
               [&tape](const Parameter<T>& p) { return tape.constant(p.value); });
}

template <typename T>
Tensor TransformerModel<T>::logits(std::span<const Token> tokens, std::size_t batch,
                                   std::size_t seq) const {
  Tape<T> tape;
  const auto& out = forward_const(tape, tokens, batch, seq).value();
  if constexpr (std::is_same_v<T, float>) {
    return out.reshaped(Shape{batch * seq, cfg_.vocab_size});
  } else {
    Tensor cast(Shape{batch * seq, cfg_.vocab_size});
    for (std::size_t i = 0; i < cast.size(); ++i) cast[i] = static_cast<float>(out[i]);
    return cast;
  }
}

template <typename T>
void TransformerModel<T>::set_mode(LinearMode mode, double lambda) {
  if (mode == LinearMode::soft && !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("set_mode: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  for (auto& blk : blocks_) {
    for (BitLinear<T>* l : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.up, &blk.down}) {
      l->set_mode(mode, lambda);
    }
  }
  mode_ = mode;
  lambda_ = blocks_.empty() ? 0.0 : blocks_.front().q.lambda();
}

template <typename T>
std::vector<Parameter<T>*> TransformerModel<T>::parameters() {
  std::vector<Parameter<T>*> out{&tok_emb_, &pos_emb_};
  for (auto& blk : blocks_) {
    for (BitLinear<T>* l : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.up, &blk.down}) {
      out.push_back(&l->weight());
    }
  }
  if (!cfg_.tie_embeddings) out.push_back(&head_);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> TransformerModel<T>::parameters() const {
  auto mut = const_cast<TransformerModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t TransformerModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
std::vector<const BitLinear<T>*> TransformerModel<T>::linear_layers() const {
  std::vector<const BitLinear<T>*> out;
  for (const auto& blk : blocks_) {
    for (const BitLinear<T>* l : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.up, &blk.down}) {
      out.push_back(l);
    }
  }
  return out;
}

template class BitLinear<float>;
template class BitLinear<double>;
template class TransformerModel<float>;
template class TransformerModel<double>;

}  // namespace tqat
