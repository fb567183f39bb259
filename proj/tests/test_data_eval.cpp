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

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tqat/autograd.hpp"
#include "tqat/data.hpp"
#include "tqat/error.hpp"
#include "tqat/eval.hpp"
#include "tqat/nn.hpp"

using namespace tqat;

namespace {

// Every position predicts the uniform distribution.
class UniformModel final : public LanguageModel {
 public:
  const ModelConfig& config() const override { return cfg_; }
  Tensor logits(std::span<const Token> tokens, std::size_t, std::size_t) const override {
    return Tensor::full({tokens.size(), cfg_.vocab_size}, 0.25f);
  }

 private:
  ModelConfig cfg_;
};

// Adds a per-position constant to every logit of an underlying model; the
// softmax, and so every score, is unchanged.
class ShiftedModel final : public LanguageModel {
 public:
  explicit ShiftedModel(const LanguageModel& base) : base_(base) {}
  const ModelConfig& config() const override { return base_.config(); }
  Tensor logits(std::span<const Token> tokens, std::size_t batch, std::size_t seq) const override {
    Tensor out = base_.logits(tokens, batch, seq);
    const std::size_t v = out.cols();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const float shift = static_cast<float>(r % seq) * 0.375f - 2.0f;
      for (std::size_t j = 0; j < v; ++j) out[r * v + j] += shift;
    }
    return out;
  }

 private:
  const LanguageModel& base_;
};

std::shared_ptr<const data::Bytes> corpus(std::size_t n = 1 << 18) {
  return std::make_shared<const data::Bytes>(data::generate_corpus(n, 11));
}

std::string text(const std::vector<Token>& t) { return std::string(t.begin(), t.end()); }

std::vector<Token> tokens(const std::string& s) { return std::vector<Token>(s.begin(), s.end()); }

TransformerModel<float> small_model() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_seq_len = 32;
  TransformerModel<float> m(cfg);
  std::mt19937_64 rng(3);
  m.init(rng);
  // Larger weights so the scores are far from ties.
  std::normal_distribution<float> d(0.0f, 0.5f);
  for (auto* p : m.parameters())
    for (auto& x : p->value.data()) x = d(rng);
  return m;
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic text") {
  const auto a = data::generate_corpus(10000, 5);
  CHECK(a.size() == 10000);
  CHECK(a == data::generate_corpus(10000, 5));
  CHECK(a != data::generate_corpus(10000, 6));
  for (auto b : a) CHECK((b == '\n' || (b >= 32 && b < 127)));
}

TEST_CASE("batch stream determinism and shift") {
  const auto c = corpus();
  data::BatchStream s1(c, 32, 4, 9), s2(c, 32, 4, 9);
  for (std::uint64_t t : {0ull, 1ull, 17ull, 123456789ull}) {
    const auto a = s1.batch(t), b = s2.batch(t);
    CHECK(a.inputs == b.inputs);
    CHECK(a.targets == b.targets);
    REQUIRE(a.inputs.size() == 4 * 32);
    for (std::size_t row = 0; row < 4; ++row) {
      const std::size_t off = s1.offset(t, row);
      CHECK(off + 32 < c->size());
      for (std::size_t i = 0; i < 32; ++i) {
        CHECK(a.inputs[row * 32 + i] == (*c)[off + i]);
        CHECK(a.targets[row * 32 + i] == (*c)[off + i + 1]);
        if (i + 1 < 32) CHECK(a.targets[row * 32 + i] == a.inputs[row * 32 + i + 1]);
      }
    }
  }
  CHECK(s1.batch(3).inputs != s1.batch(4).inputs);
  CHECK(data::BatchStream(c, 32, 4, 10).batch(3).inputs != s1.batch(3).inputs);
}

TEST_CASE("batch offsets cover the whole valid range") {
  // 40 bytes and seq 8: offsets in [0, 31].
  auto tiny = std::make_shared<const data::Bytes>(data::generate_corpus(40, 1));
  data::BatchStream s(tiny, 8, 16, 2);
  std::set<std::size_t> seen;
  for (std::uint64_t t = 0; t < 500; ++t)
    for (std::size_t r = 0; r < 16; ++r) seen.insert(s.offset(t, r));
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 31);
  CHECK(seen.size() == 32);
}

TEST_CASE("batch token histogram follows the corpus") {
  const auto c = corpus();
  data::BatchStream s(c, 64, 8, 4);
  std::array<double, 256> corpus_hist{}, batch_hist{};
  for (auto b : *c) corpus_hist[b] += 1.0 / c->size();
  std::size_t n = 0;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    for (Token x : s.batch(t).inputs) {
      batch_hist[x] += 1.0;
      ++n;
    }
  }
  double tv = 0.0;
  for (int i = 0; i < 256; ++i) tv += std::abs(batch_hist[i] / n - corpus_hist[i]);
  tv *= 0.5;
  CHECK(tv <= 0.05);
}

TEST_CASE("batch stream rejects a corpus that is too small") {
  auto tiny = std::make_shared<const data::Bytes>(data::Bytes(64, 'a'));
  CHECK_THROWS_AS(data::BatchStream(tiny, 64, 2, 0), ContractError);
  CHECK_NOTHROW(data::BatchStream(tiny, 63, 2, 0));
}

TEST_CASE("held-out split is a disjoint suffix") {
  const auto c = data::generate_corpus(100000, 2);
  const auto split = data::split_corpus(c, 0.1);
  CHECK(split.train->size() + split.held_out->size() == c.size());
  CHECK(split.held_out->size() == 10000);
  CHECK(std::equal(split.train->begin(), split.train->end(), c.begin()));
  CHECK(std::equal(split.held_out->begin(), split.held_out->end(), c.begin() + 90000));
  // Training windows never reach into the held-out range.
  data::BatchStream s(split.train, 64, 8, 1);
  for (std::uint64_t t = 0; t < 200; ++t)
    for (std::size_t r = 0; r < 8; ++r) CHECK(s.offset(t, r) + 64 < split.train->size());
  CHECK_THROWS_AS(data::split_corpus(c, 1.5), ContractError);
}

TEST_CASE("perplexity of the uniform model is the vocabulary size") {
  UniformModel m;
  data::BatchStream s(corpus(), 32, 4, 0);
  CHECK(eval::perplexity(m, s, 3) == doctest::Approx(256.0).epsilon(1e-9));
  CHECK_THROWS_AS(eval::mean_nll(m, s, 0), ContractError);
}

TEST_CASE("perplexity equals exp of the cross-entropy") {
  auto model = small_model();
  data::BatchStream s(corpus(), 16, 3, 5);
  double ce = 0.0;
  for (std::uint64_t t = 2; t < 6; ++t) {
    const auto b = s.batch(t);
    Tape<float> tape;
    ce += ops::softmax_cross_entropy(model.forward_const(tape, b.inputs, b.batch, b.seq), b.targets).value()[0];
  }
  ce /= 4;
  CHECK(eval::perplexity(model, s, 4, 2) == doctest::Approx(std::exp(ce)).epsilon(1e-6));
}

TEST_CASE("ties go to the lowest index") {
  UniformModel m;
  eval::McTask t{"copy", tokens("ab ab "), {tokens("ab"), tokens("ab"), tokens("cd")}, 2};
  CHECK(eval::mc_score(m, t) == 0);
  auto model = small_model();
  eval::McTask same{"copy", tokens("xy xy "), {tokens("xy"), tokens("xy")}, 1};
  CHECK(eval::mc_score(model, same) == 0);
}

TEST_CASE("scores use length-normalised log-likelihood") {
  auto model = small_model();
  eval::McTask t{"mixed", tokens("hello "), {tokens("w"), tokens("wor"), tokens("world"), tokens("xx")}, 0};
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t i = 0; i < t.choices.size(); ++i) {
    const double s = eval::continuation_logprob(model, t.prompt, t.choices[i]) / t.choices[i].size();
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  CHECK(eval::mc_score(model, t) == best);

  // The batched path used for equal lengths agrees with one pass per choice.
  for (const auto& task : eval::make_synthetic_suite(8, 20)) {
    std::size_t b = 0;
    double bs = -1e300;
    for (std::size_t i = 0; i < task.choices.size(); ++i) {
      const double s = eval::continuation_logprob(model, task.prompt, task.choices[i]) / task.choices[i].size();
      if (s > bs) {
        bs = s;
        b = i;
      }
    }
    CHECK(eval::mc_score(model, task) == b);
  }
  eval::McTask empty{"x", tokens("a"), {}, 0};
  CHECK_THROWS_AS(eval::mc_score(model, empty), ContractError);
}

TEST_CASE("scores are invariant to per-position logit shifts") {
  auto model = small_model();
  ShiftedModel shifted(model);
  for (const auto& task : eval::make_synthetic_suite(4, 30)) CHECK(eval::mc_score(model, task) == eval::mc_score(shifted, task));
}

TEST_CASE("uniform model scores chance on 10k tasks") {
  UniformModel m;
  const auto suite = eval::make_synthetic_suite(77, 3334);
  REQUIRE(suite.size() >= 10000);
  const auto report = eval::run_suite(m, suite);
  CHECK(std::abs(report.overall - 0.25) <= 0.03);
}

TEST_CASE("synthetic suite is deterministic and well formed") {
  const auto a = eval::make_synthetic_suite(5, 200), b = eval::make_synthetic_suite(5, 200);
  REQUIRE(a.size() == 600);
  std::map<std::string, int> families;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].prompt == b[i].prompt);
    CHECK(a[i].choices == b[i].choices);
    CHECK(a[i].correct == b[i].correct);
    const auto& t = a[i];
    families[t.family]++;
    REQUIRE(t.choices.size() == 4);
    REQUIRE(t.correct < 4);
    // Independent answer for each family.
    const std::string p = text(t.prompt);
    std::string answer;
    if (t.family == "copy") {
      answer = p.substr(0, p.find(' '));
      std::string rebuilt;
      while (rebuilt.size() < p.size()) rebuilt += answer + " ";
      CHECK(rebuilt == p);
    } else if (t.family == "majority") {
      std::map<char, int> count;
      for (char ch : p.substr(0, p.size() - 1)) count[ch]++;
      CHECK(count.size() == 2);
      answer = std::string(1, std::max_element(count.begin(), count.end(), [](auto& x, auto& y) {
                                return x.second < y.second;
                              })->first);
    } else {
      REQUIRE(t.family == "reversal");
      const std::string w = p.substr(0, p.size() - 1);
      CHECK(p.back() == '>');
      answer = std::string(w.rbegin(), w.rend());
    }
    std::size_t matches = 0;
    for (const auto& c : t.choices) matches += text(c) == answer;
    CHECK(matches == 1);
    CHECK(text(t.choices[t.correct]) == answer);
    std::set<std::vector<Token>> distinct(t.choices.begin(), t.choices.end());
    CHECK(distinct.size() == 4);
  }
  CHECK(families == std::map<std::string, int>{{"copy", 200}, {"majority", 200}, {"reversal", 200}});
  CHECK(eval::make_synthetic_suite(6, 10)[0].prompt != a[0].prompt);
}

TEST_CASE("correct slot is uniform") {
  const auto suite = eval::make_synthetic_suite(2024, 3334);
  std::array<double, 4> count{};
  for (const auto& t : suite) count[t.correct] += 1;
  const double expected = suite.size() / 4.0;
  double chi2 = 0.0;
  for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
  // Critical value of chi-square with 3 degrees of freedom at p = 0.01.
  CHECK(chi2 < 11.345);
}
