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

#include "tqat/infer.hpp"

#include <algorithm>
#include <chrono>

#include "tqat/error.hpp"
#include "tqat/functional.hpp"
#include "tqat/kernels/kernels.hpp"
#include "tqat/linalg.hpp"
#include "tqat/serialize.hpp"
#include "tqat/trainer.hpp"

namespace tqat {
namespace {

constexpr std::string_view kMagic = "TQPK";
constexpr std::uint32_t kVersion = 1;


void rmsnorm(const Tensor& x, Tensor& y) {
  y = Tensor(x.shape());
  functional::rmsnorm_rows(x.ptr(), x.rows(), x.cols(), ops::kRmsNormEps, y.ptr(), static_cast<float*>(nullptr));
}

void put_config(ByteWriter& w, const ModelConfig& c) {
  for (auto v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.max_seq_len, c.ffn_multiplier}) w.put(v);
  w.put(static_cast<std::uint8_t>(c.tie_embeddings));
}

ModelConfig get_config(ByteReader& r) {
  ModelConfig c;
  for (auto* v : {&c.vocab_size, &c.d_model, &c.n_layers, &c.n_heads, &c.max_seq_len, &c.ffn_multiplier}) {
    *v = r.get<std::uint32_t>();
  }
  c.tie_embeddings = r.get<std::uint8_t>() != 0;
  return c;
}

void put_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  w.put_string(name);
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
  w.put_array(t.data());
}

Tensor get_tensor(ByteReader& r, const std::string& expected_name, const Shape& expected_shape) {
  const auto name = r.get_string();
  if (name != expected_name) throw FormatError("packed model: expected tensor '" + expected_name + "', found '" + name + "'");
  const auto rank = r.get<std::uint32_t>();
  Shape shape;
  for (std::uint32_t i = 0; i < rank && i < 8; ++i) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
  if (shape != expected_shape) throw FormatError("packed model: tensor '" + name + "' has shape " + to_string(shape));
  return Tensor(shape, r.get_array<float>(numel(shape)));
}

}  // namespace



PackedTernaryMatrix PackedTernaryMatrix::pack(std::span<const std::int8_t> trits, std::size_t rows,
                                              std::size_t cols, float w_scale) {
  if (trits.size() != rows * cols) {
    throw DimensionError("pack: " + std::to_string(trits.size()) + " trits for a " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
  PackedTernaryMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.w_scale_ = w_scale;
  m.bytes_ = pack_trits(trits);
  return m;
}

PackedTernaryMatrix PackedTernaryMatrix::pack(const QuantizedWeights<float>& qw) {
  if (qw.shape.size() != 2) throw DimensionError("pack: weights must be a matrix");
  return pack(qw.trits, qw.shape[0], qw.shape[1], qw.w_scale);
}

PackedTernaryMatrix PackedTernaryMatrix::from_bytes(std::size_t rows, std::size_t cols, float w_scale,
                                                    std::vector<std::uint8_t> bytes) {
  const std::size_t n = rows * cols;
  if (bytes.size() != (n + 3) / 4) throw FormatError("packed matrix: wrong byte count");
  for (std::size_t i = 0; i < n; ++i) {
    if (((bytes[i >> 2] >> (2 * (i & 3))) & 3u) == 0b11) throw FormatError("packed matrix: forbidden code 11");
  }
  if (n % 4 != 0 && (bytes.back() >> (2 * (n % 4))) != 0) throw FormatError("packed matrix: non-zero padding");
  PackedTernaryMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.w_scale_ = w_scale;
  m.bytes_ = std::move(bytes);
  return m;
}

std::vector<std::int8_t> PackedTernaryMatrix::unpack() const {
  return unpack_trits(bytes_, rows_ * cols_);
}

Tensor ternary_matvec(const PackedTernaryMatrix& pm, const QuantizedActivations<float>& q) {
  if (q.q.size() != pm.cols()) {
    throw ContractError("ternary_matvec: " + std::to_string(q.q.size()) + " activations for " +
                        std::to_string(pm.cols()) + " columns");
  }
  std::vector<std::int32_t> acc(pm.rows());
  kernels::active().ternary_gemm(pm.bytes().data(), pm.rows(), pm.cols(), q.q.data(), 1, acc.data());
  Tensor out(Shape{pm.rows()});
  const double denom = static_cast<double>(pm.w_scale()) * static_cast<double>(q.x_scale);
  for (std::size_t r = 0; r < pm.rows(); ++r) out[r] = static_cast<float>(acc[r] / denom);
  return out;
}

Tensor ternary_linear(const PackedTernaryMatrix& pm, const Tensor& x, const QuantConfig& quant) {
  if (x.cols() != pm.cols()) {
    throw ContractError("ternary_linear: input has " + std::to_string(x.cols()) + " features, matrix has " +
                        std::to_string(pm.cols()) + " columns");
  }
  return ternary_matmul_rows<float>(pm.bytes(), pm.rows(), pm.cols(), pm.w_scale(), x, quant);
}

PackedModel PackedModel::from_model(const TransformerModel<float>& model) {
  PackedModel pm;
  pm.cfg_ = model.config();
  const auto linears = model.linear_layers();
  if (!linears.empty()) pm.quant_ = linears.front()->quant_config();
  for (const auto* l : linears) {
    pm.layers_.push_back({l->weight().name,
                          PackedTernaryMatrix::pack(quantize_weights(l->weight().value, l->quant_config()))});
  }
  pm.tok_emb_ = model.token_embedding().value;
  pm.pos_emb_ = model.position_embedding().value;
  if (!pm.cfg_.tie_embeddings) pm.head_ = model.head().value;
  return pm;
}

PackedModel PackedModel::from_checkpoint(const Checkpoint& ckpt, bool force) {
  if (ckpt.mode != LinearMode::quantized && !force) {
    throw ContractError("pack: checkpoint is in " + std::string(to_string(ckpt.mode)) +
                        " mode; quantizing it requires force");
  }
  return from_model(model_from_checkpoint(ckpt));
}

std::vector<std::uint8_t> PackedModel::encode() const {
  ByteWriter w;
  w.put_magic(kMagic);
  w.put(kVersion);
  put_config(w, cfg_);
  w.put(static_cast<std::int32_t>(quant_.activation_bits));
  w.put(quant_.eps_scale);
  w.put(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    w.put_string(l.name);
    w.put(static_cast<std::uint32_t>(l.weight.rows()));
    w.put(static_cast<std::uint32_t>(l.weight.cols()));
    w.put(l.weight.w_scale());
    w.put_bytes(l.weight.bytes());
  }
  put_tensor(w, "tok_emb", tok_emb_);
  put_tensor(w, "pos_emb", pos_emb_);
  if (!cfg_.tie_embeddings) put_tensor(w, "head", head_);
  return std::move(w.bytes());
}

PackedModel PackedModel::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic, "packed model");
  if (auto version = r.get<std::uint32_t>(); version != kVersion) {
    throw FormatError("unsupported packed model version " + std::to_string(version));
  }
  PackedModel pm;
  pm.cfg_ = get_config(r);
  try {
    pm.cfg_.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("packed model: ") + e.what());
  }
  pm.quant_.activation_bits = r.get<std::int32_t>();
  pm.quant_.eps_scale = r.get<double>();
  const auto n_layers = r.get<std::uint32_t>();
  // Reference layout, used to validate the records.
  const TransformerModel<float> shape_ref(pm.cfg_, pm.quant_);
  const auto expected = shape_ref.linear_layers();
  if (n_layers != expected.size()) throw FormatError("packed model: layer count does not match config");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    auto name = r.get_string();
    const std::size_t rows = r.get<std::uint32_t>();
    const std::size_t cols = r.get<std::uint32_t>();
    const auto scale = r.get<float>();
    if (name != expected[i]->weight().name || rows != expected[i]->out_features() ||
        cols != expected[i]->in_features()) {
      throw FormatError("packed model: unexpected layer record '" + name + "'");
    }
    auto raw = r.get_bytes((rows * cols + 3) / 4);
    pm.layers_.push_back({std::move(name), PackedTernaryMatrix::from_bytes(
                                               rows, cols, scale, {raw.begin(), raw.end()})});
  }
  const std::size_t v = pm.cfg_.vocab_size, d = pm.cfg_.d_model;
  pm.tok_emb_ = get_tensor(r, "tok_emb", Shape{v, d});
  pm.pos_emb_ = get_tensor(r, "pos_emb", Shape{pm.cfg_.max_seq_len, d});
  if (!pm.cfg_.tie_embeddings) pm.head_ = get_tensor(r, "head", Shape{v, d});
  if (!r.at_end()) throw FormatError("packed model: trailing bytes");
  return pm;
}

void PackedModel::save(const std::filesystem::path& path) const { write_file_atomic(path, encode()); }

PackedModel PackedModel::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode(bytes);
}

Tensor PackedModel::logits(std::span<const Token> tokens, std::size_t batch, std::size_t seq) const {
  const std::size_t d = cfg_.d_model, vocab = cfg_.vocab_size, n = batch * seq;
  if (seq == 0 || batch == 0 || seq > cfg_.max_seq_len) throw ContractError("packed forward: bad sequence length");
  if (tokens.size() != n) throw DimensionError("packed forward: token count does not match batch x seq");

  Tensor x(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const Token t = tokens[i];
    if (t < 0 || static_cast<std::uint32_t>(t) >= vocab) throw ContractError("packed forward: token id outside vocabulary");
    const float* te = tok_emb_.ptr() + static_cast<std::size_t>(t) * d;
    const float* pe = pos_emb_.ptr() + (i % seq) * d;
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = te[j] + pe[j];
  }

  Tensor normed;
  auto linear = [&](const PackedLayer& layer, const Tensor& in) {
    rmsnorm(in, normed);
    return ternary_linear(layer.weight, normed, quant_);
  };
  for (std::size_t b = 0; b < cfg_.n_layers; ++b) {
    const PackedLayer* l = &layers_[b * 6];
    const Tensor q = linear(l[0], x);
    const Tensor k = linear(l[1], x);
    const Tensor v = linear(l[2], x);
    Tensor att(Shape{n, d});
    functional::attention_forward(q.ptr(), k.ptr(), v.ptr(), batch, seq, cfg_.n_heads, d, att.ptr(),
                                  static_cast<float*>(nullptr));
    const Tensor o = linear(l[3], att);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i];
    Tensor h = linear(l[4], x);
    for (auto& e : h.data()) e = functional::silu(e);
    const Tensor down = linear(l[5], h);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += down[i];
  }
  rmsnorm(x, normed);
  const Tensor& head = cfg_.tie_embeddings ? tok_emb_ : head_;
  Tensor out(Shape{n, vocab});
  linalg::gemm<float>(linalg::Op::none, linalg::Op::transpose, n, vocab, d, normed.ptr(), d, head.ptr(), d,
                      out.ptr(), vocab, false);
  return out;
}

std::size_t PackedModel::linear_bytes_packed() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += l.weight.bytes().size() + sizeof(float);
  return total;
}

std::size_t PackedModel::linear_bytes_float() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += l.weight.rows() * l.weight.cols() * sizeof(float);
  return total;
}

BenchReport bench(const PackedModel& packed, const TransformerModel<float>& reference, std::size_t batch,
                  std::size_t seq, std::size_t trials) {
  if (!(packed.config() == reference.config())) throw CompatibilityError("bench: models have different configs");
  trials = std::max<std::size_t>(trials, 5);
  std::vector<Token> tokens(batch * seq);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tokens[i] = static_cast<Token>((i * 2654435761u) % packed.config().vocab_size);
  }
  TransformerModel<float> fp = reference;
  fp.set_mode(LinearMode::full_precision);

  auto median_tps = [&](const LanguageModel& m) {
    std::vector<double> tps;
    m.logits(tokens, batch, seq);  // warm-up
    for (std::size_t t = 0; t < trials; ++t) {
      const auto t0 = std::chrono::steady_clock::now();
      m.logits(tokens, batch, seq);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      tps.push_back(static_cast<double>(tokens.size()) / std::max(s, 1e-9));
    }
    std::sort(tps.begin(), tps.end());
    return tps[tps.size() / 2];
  };
  BenchReport r;
  r.trials = trials;
  r.tokens_per_s_packed = median_tps(packed);
  r.tokens_per_s_float = median_tps(fp);
  r.bytes_packed = packed.linear_bytes_packed();
  r.bytes_float = packed.linear_bytes_float();
  return r;
}

}  // namespace tqat
