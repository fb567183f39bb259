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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "test_util.hpp"
#include "tqat/data.hpp"
#include "tqat/error.hpp"
#include "tqat/infer.hpp"
#include "tqat/kernels/kernels.hpp"
#include "tqat/trainer.hpp"

using namespace tqat;
using tqat::testing::random_tensor;

namespace {

std::vector<std::int8_t> random_trits(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(-1, 1);
  std::vector<std::int8_t> t(n);
  for (auto& x : t) x = static_cast<std::int8_t>(d(rng));
  return t;
}

ModelConfig packed_config() {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.max_seq_len = 32;
  cfg.ffn_multiplier = 4;
  return cfg;
}

TransformerModel<float> quantized_model(std::uint64_t seed) {
  TransformerModel<float> m(packed_config());
  std::mt19937_64 rng(seed);
  m.init(rng);
  tqat::testing::randomize_parameters(m, 0.2, rng);
  m.set_mode(LinearMode::quantized);
  return m;
}

std::vector<Token> random_tokens(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<Token> d(0, 255);
  std::vector<Token> t(n);
  for (auto& x : t) x = d(rng);
  return t;
}

}  // namespace

TEST_CASE("pack examples") {
  const std::vector<std::int8_t> t{0, 1, -1, 1};
  CHECK(pack_trits(t) == std::vector<std::uint8_t>{0x64});
  CHECK(0 + 1 * 4 + 2 * 16 + 1 * 64 == 0x64);
  CHECK(pack_trits(std::vector<std::int8_t>(8, 0)) == std::vector<std::uint8_t>{0x00, 0x00});
  // Partial final byte is zero-padded.
  CHECK(pack_trits(std::vector<std::int8_t>{-1, -1, 1, 0, 1}) == std::vector<std::uint8_t>{0x1A, 0x01});
  CHECK(pack_trits(std::vector<std::int8_t>{}).empty());
}

TEST_CASE("pack rejects non-trits and unpack rejects the forbidden code") {
  CHECK_THROWS_AS(pack_trits(std::vector<std::int8_t>{0, 2}), ContractError);
  CHECK_THROWS_AS(pack_trits(std::vector<std::int8_t>{-2}), ContractError);
  CHECK_THROWS_AS(unpack_trits(std::vector<std::uint8_t>{0x03}, 1), FormatError);
  CHECK_THROWS_AS(unpack_trits(std::vector<std::uint8_t>{0xC0}, 4), FormatError);
  CHECK_THROWS_AS(unpack_trits(std::vector<std::uint8_t>{0x00}, 5), FormatError);
  CHECK_THROWS_AS(PackedTernaryMatrix::from_bytes(1, 4, 1.0f, {0x00, 0x00}), FormatError);
  // Non-zero padding bits.
  CHECK_THROWS_AS(PackedTernaryMatrix::from_bytes(1, 3, 1.0f, {0x40}), FormatError);
}

TEST_CASE("pack round trip is exhaustive over single-byte groups") {
  std::size_t seen = 0;
  std::vector<bool> hit(256, false);
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c)
        for (int d = -1; d <= 1; ++d) {
          const std::vector<std::int8_t> t{std::int8_t(a), std::int8_t(b), std::int8_t(c), std::int8_t(d)};
          const auto bytes = pack_trits(t);
          REQUIRE(bytes.size() == 1);
          for (int i = 0; i < 4; ++i) CHECK(((bytes[0] >> (2 * i)) & 3) != 3);
          CHECK(unpack_trits(bytes, 4) == t);
          CHECK_FALSE(hit[bytes[0]]);
          hit[bytes[0]] = true;
          ++seen;
        }
  CHECK(seen == 81);
  // Every byte not produced by packing contains the forbidden code.
  for (int b = 0; b < 256; ++b) {
    if (hit[b]) continue;
    CHECK_THROWS_AS(unpack_trits(std::vector<std::uint8_t>{std::uint8_t(b)}, 4), FormatError);
  }
}

TEST_CASE("pack round trip on random matrices") {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<std::size_t> dim(1, 40);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    const auto t = random_trits(r * c, rng);
    const auto pm = PackedTernaryMatrix::pack(t, r, c, 1.5f);
    REQUIRE(pm.bytes().size() == (r * c + 3) / 4);
    REQUIRE(pm.unpack() == t);
    REQUIRE(PackedTernaryMatrix::from_bytes(r, c, 1.5f, pm.bytes()) == pm);
  }
}

TEST_CASE("ternary matvec examples") {
  const std::vector<std::int8_t> row{1, -1, 0};
  auto pm = PackedTernaryMatrix::pack(row, 1, 3, 2.0f);
  QuantizedActivations<float> q{{1, 3}, {10, 20, 30}, 4.0f};
  auto y = ternary_matvec(pm, q);
  CHECK(y[0] == -1.25f);

  auto zero = PackedTernaryMatrix::pack(std::vector<std::int8_t>(3, 0), 1, 3, 2.0f);
  CHECK(ternary_matvec(zero, q)[0] == 0.0f);

  QuantizedActivations<float> wrong{{1, 4}, {1, 2, 3, 4}, 1.0f};
  CHECK_THROWS_AS(ternary_matvec(pm, wrong), ContractError);
}

TEST_CASE("integer path matches the dequantized float reference") {
  std::mt19937_64 rng(62);
  std::uniform_int_distribution<std::size_t> dim(1, 96);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = dim(rng), cols = dim(rng);
    auto w = random_tensor<float>({rows, cols}, rng);
    auto qw = quantize_weights(w);
    auto pm = PackedTernaryMatrix::pack(qw);
    auto x = random_tensor<float>({cols}, rng);
    auto qa = quantize_activations(x);
    auto y = ternary_matvec(pm, qa);
    const auto wd = dequantize_weights(qw);
    const auto xd = dequantize_activations(qa);
    for (std::size_t r = 0; r < rows; ++r) {
      double ref = 0.0;
      for (std::size_t c = 0; c < cols; ++c) ref += double(wd[r * cols + c]) * double(xd[c]);
      worst = std::max(worst, std::abs(ref - y[r]));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("large accumulations do not overflow") {
  const std::size_t cols = 1 << 16;
  std::vector<std::int8_t> ones(cols, 1);
  auto pm = PackedTernaryMatrix::pack(ones, 1, cols, 1.0f);
  QuantizedActivations<float> q{{1, cols}, std::vector<std::int16_t>(cols, -128), 1.0f};
  CHECK(ternary_matvec(pm, q)[0] == -128.0f * cols);
}

TEST_CASE("ternary gemm kernel variants agree") {
  const auto* avx = kernels::avx2_table();
  if (avx == nullptr) {
    MESSAGE("AVX2 variant unavailable; skipped");
    return;
  }
  const auto& ref = kernels::scalar_table();
  std::mt19937_64 rng(63);
  std::uniform_int_distribution<std::size_t> dim(1, 130);
  std::uniform_int_distribution<int> code(-128, 127);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t rows = dim(rng), cols = dim(rng), n = 1 + trial % 5;
    const auto packed = pack_trits(random_trits(rows * cols, rng));
    std::vector<std::int16_t> q(n * cols);
    for (auto& v : q) v = static_cast<std::int16_t>(code(rng));
    std::vector<std::int32_t> a(n * rows), b(n * rows);
    ref.ternary_gemm(packed.data(), rows, cols, q.data(), n, a.data());
    avx->ternary_gemm(packed.data(), rows, cols, q.data(), n, b.data());
    REQUIRE(a == b);
  }
}

TEST_CASE("packed model matches the quantized training graph") {
  auto model = quantized_model(64);
  const auto packed = PackedModel::from_model(model);
  std::mt19937_64 rng(65);
  double worst = 0.0;
  std::size_t agree = 0, total = 0;
  while (total < 10000) {
    const auto tokens = random_tokens(16 * 32, rng);
    const Tensor a = model.logits(tokens, 16, 32);
    const Tensor b = packed.logits(tokens, 16, 32);
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const float* pa = a.ptr() + r * 256;
      const float* pb = b.ptr() + r * 256;
      agree += std::max_element(pa, pa + 256) - pa == std::max_element(pb, pb + 256) - pb;
      ++total;
    }
  }
  MESSAGE("max |logit diff| = " << worst << ", greedy agreement " << agree << "/" << total);
  CHECK(worst <= 1e-4);
  CHECK(double(agree) / double(total) >= 0.999);
}

TEST_CASE("exported trits are the quantized final weights") {
  auto model = quantized_model(66);
  const auto packed = PackedModel::decode(PackedModel::from_model(model).encode());
  const auto linears = model.linear_layers();
  REQUIRE(packed.layers().size() == linears.size());
  for (std::size_t i = 0; i < linears.size(); ++i) {
    const auto qw = quantize_weights(linears[i]->weight().value);
    CHECK(packed.layers()[i].name == linears[i]->weight().name);
    CHECK(packed.layers()[i].weight.unpack() == qw.trits);
    CHECK(packed.layers()[i].weight.w_scale() == qw.w_scale);
  }
}

TEST_CASE("packed format size and determinism") {
  auto model = quantized_model(67);
  const auto packed = PackedModel::from_model(model);
  const double ratio = double(packed.linear_bytes_packed()) / double(packed.linear_bytes_float());
  CHECK(ratio <= 0.26);
  CHECK(ratio <= 1.0 / 15.0);
  std::size_t params = 0;
  for (const auto* l : model.linear_layers()) params += l->weight().value.size();
  CHECK(packed.linear_bytes_float() == 4 * params);

  const auto bytes = packed.encode();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TQPK");
  CHECK(PackedModel::from_model(model).encode() == bytes);
  CHECK(PackedModel::decode(bytes).encode() == bytes);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(PackedModel::decode(truncated), FormatError);
  auto corrupt = bytes;
  corrupt[2] = 'Z';
  CHECK_THROWS_AS(PackedModel::decode(corrupt), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "tqat_test_infer.tqpk";
  packed.save(path);
  CHECK(PackedModel::load(path).encode() == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("packing a checkpoint requires a quantized phase") {
  TrainConfig cfg;
  cfg.model = packed_config();
  cfg.batch = 2;
  cfg.seq = 16;
  auto split = data::split_corpus(data::generate_corpus(1 << 14, 2));
  RunPlan p;
  p.total_steps = 4;
  p.regime = Regime::full16;
  Trainer t(cfg, p, data::BatchStream(split.train, 16, 2, 1));
  t.step();
  const auto ckpt = t.checkpoint();
  CHECK_THROWS_AS(PackedModel::from_checkpoint(ckpt), ContractError);
  CHECK_NOTHROW(PackedModel::from_checkpoint(ckpt, true));

  RunPlan q = p;
  q.regime = Regime::full158;
  Trainer tq(cfg, q, data::BatchStream(split.train, 16, 2, 1));
  tq.step();
  const auto packed = PackedModel::from_checkpoint(tq.checkpoint());
  std::mt19937_64 rng(68);
  const auto tokens = random_tokens(32, rng);
  const Tensor a = tq.model().logits(tokens, 2, 16);
  const Tensor b = packed.logits(tokens, 2, 16);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-4);
}

TEST_CASE("bench report") {
  auto model = quantized_model(69);
  const auto packed = PackedModel::from_model(model);
  TransformerModel<float> reference = model;
  reference.set_mode(LinearMode::full_precision);
  const auto r1 = bench(packed, reference, 2, 16, 5);
  const auto r2 = bench(packed, reference, 2, 16, 5);
  CHECK(r1.tokens_per_s_packed > 0);
  CHECK(std::isfinite(r1.tokens_per_s_packed));
  CHECK(r1.tokens_per_s_float > 0);
  CHECK(std::isfinite(r1.tokens_per_s_float));
  CHECK(r1.bytes_packed == r2.bytes_packed);
  CHECK(r1.bytes_float == r2.bytes_float);
  CHECK(r1.trials == 5);
  CHECK(double(r1.bytes_packed) / double(r1.bytes_float) <= 1.0 / 15.0);
  // Fewer than five trials are rounded up so the median stays meaningful.
  CHECK(bench(packed, reference, 2, 16, 2).trials == 5);
}
