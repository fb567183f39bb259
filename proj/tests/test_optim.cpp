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
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "test_util.hpp"
#include "tqat/error.hpp"
#include "tqat/optim.hpp"

using namespace tqat;
using tqat::testing::random_tensor;

namespace {

AdamWConfig schedule(double peak, double min, std::uint64_t warmup, std::uint64_t total) {
  AdamWConfig cfg;
  cfg.lr_peak = peak;
  cfg.lr_min = min;
  cfg.warmup_steps = warmup;
  cfg.total_steps = total;
  return cfg;
}

struct Params {
  std::vector<Parameter<float>> storage;
  std::vector<Parameter<float>*> ptrs;

  Params(std::mt19937_64& rng, std::size_t n) {
    storage.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      storage.push_back({"p" + std::to_string(i), random_tensor<float>({2, 3 + i}, rng), {}});
      storage.back().zero_grad();
    }
    for (auto& p : storage) ptrs.push_back(&p);
  }

  void set_grads(std::mt19937_64& rng) {
    for (auto& p : storage) p.grad = random_tensor<float>(p.value.shape(), rng);
  }
  std::vector<Tensor> values() const {
    std::vector<Tensor> out;
    for (const auto& p : storage) out.push_back(p.value);
    return out;
  }
};

}  // namespace

TEST_CASE("learning-rate schedule examples") {
  const auto cfg = schedule(1e-3, 1e-4, 100, 1100);
  CHECK(lr_at(99, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(0, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(1100, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(5000, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(600, cfg) == doctest::Approx(1e-4 + (1e-3 - 1e-4) / 2).epsilon(1e-12));
  // Continuity at the end of warmup.
  CHECK(lr_at(100, cfg) == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(std::abs(lr_at(100, cfg) - lr_at(99, cfg)) <= 1e-8);

  const auto no_warmup = schedule(2e-3, 0.0, 0, 10);
  CHECK(lr_at(0, no_warmup) == doctest::Approx(2e-3));
  CHECK(lr_at(5, no_warmup) == doctest::Approx(1e-3));
}

TEST_CASE("learning-rate schedule is continuous and bounded") {
  const auto cfg = schedule(4e-4, 4e-5, 125, 2500);
  double prev = lr_at(0, cfg);
  for (std::uint64_t t = 1; t <= 2600; ++t) {
    const double lr = lr_at(t, cfg);
    CHECK(lr > 0.0);
    if (t >= 125) CHECK(lr >= 4e-5 - 1e-18);
    CHECK(lr <= 4e-4 + 1e-18);
    // Largest per-step move is one warmup increment.
    CHECK(std::abs(lr - prev) <= 4e-4 / 125 + 1e-15);
    prev = lr;
  }
}

TEST_CASE("optimizer config validation") {
  CHECK_THROWS_AS(schedule(1e-3, 1e-2, 0, 10).validate(), ContractError);
  CHECK_THROWS_AS(schedule(1e-3, 1e-4, 20, 10).validate(), ContractError);
  AdamWConfig bad_beta = schedule(1e-3, 1e-4, 0, 10);
  bad_beta.beta1 = 1.0;
  CHECK_THROWS_AS(bad_beta.validate(), ContractError);
}

TEST_CASE("single AdamW step example") {
  Parameter<float> p{"theta", Tensor({1}, {1.0f}), Tensor({1}, {0.5f})};
  AdamWConfig cfg = schedule(0.1, 0.0, 0, 10);
  cfg.beta2 = 0.999;
  cfg.weight_decay = 0.1;
  AdamW opt(cfg, {&p});
  opt.step(0.1);
  CHECK(opt.state().m[0][0] == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(opt.state().v[0][0] == doctest::Approx(0.00025).epsilon(1e-6));
  CHECK(opt.state().step_count == 1);
  CHECK(p.value[0] == doctest::Approx(0.89).epsilon(1e-6));
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  std::mt19937_64 rng(51);
  Params ps(rng, 3);
  const auto before = ps.values();
  AdamWConfig cfg = schedule(1e-2, 1e-3, 0, 10);
  cfg.weight_decay = 0.0;
  AdamW opt(cfg, ps.ptrs);
  for (int i = 0; i < 5; ++i) opt.step(1e-2);
  CHECK(ps.values() == before);
}

TEST_CASE("decoupled decay shrinks by exactly 1 - lr * wd") {
  Parameter<float> p{"theta", Tensor({3}, {1.0f, -2.0f, 0.5f}), Tensor({3})};
  AdamWConfig cfg = schedule(1e-2, 1e-3, 0, 100);
  cfg.weight_decay = 0.1;
  AdamW opt(cfg, {&p});
  std::vector<double> expected{1.0, -2.0, 0.5};
  for (int i = 0; i < 20; ++i) {
    opt.step(0.05);
    for (std::size_t j = 0; j < 3; ++j) {
      expected[j] = static_cast<float>(expected[j] * (1.0 - 0.05 * 0.1));
      CHECK(p.value[j] == static_cast<float>(expected[j]));
    }
  }
}

TEST_CASE("constant gradient matches a scalar simulation and approaches lr") {
  Parameter<float> p{"theta", Tensor({1}, {0.0f}), Tensor({1})};
  AdamWConfig cfg = schedule(1e-3, 1e-3, 0, 2000);
  cfg.weight_decay = 0.0;
  AdamW opt(cfg, {&p});
  // Scalar oracle in double.
  double m = 0, v = 0, theta = 0, last_delta = 0;
  const double g = 0.3, lr = 1e-3;
  for (int t = 1; t <= 1000; ++t) {
    p.grad[0] = static_cast<float>(g);
    opt.step(lr);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    last_delta = lr * mh / (std::sqrt(vh) + cfg.eps);
    theta = static_cast<float>(theta - last_delta);
    REQUIRE(p.value[0] == doctest::Approx(theta).epsilon(1e-5));
  }
  CHECK(last_delta == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("second moments stay non-negative") {
  std::mt19937_64 rng(52);
  Params ps(rng, 2);
  AdamW opt(schedule(1e-3, 1e-4, 0, 100), ps.ptrs);
  for (int i = 0; i < 100; ++i) {
    ps.set_grads(rng);
    opt.step(1e-3);
    for (const auto& v : opt.state().v)
      for (float x : v.data()) REQUIRE(x >= 0.0f);
  }
}

TEST_CASE("reset semantics") {
  std::mt19937_64 rng(53);
  Params ps(rng, 2);
  AdamW opt(schedule(1e-3, 1e-4, 0, 100), ps.ptrs);
  for (int i = 0; i < 5; ++i) {
    ps.set_grads(rng);
    opt.step(1e-3);
  }
  opt.reset();
  const auto once = opt.state();
  opt.reset();
  CHECK(opt.state() == once);
  CHECK(once.step_count == 0);
  for (const auto& m : once.m) CHECK(m == Tensor(m.shape()));
  for (const auto& v : once.v) CHECK(v == Tensor(v.shape()));

  // m_hat == g right after a reset.
  ps.set_grads(rng);
  const float g = ps.storage[0].grad[0];
  opt.step(1e-3);
  const double m_hat = opt.state().m[0][0] / (1.0 - opt.config().beta1);
  CHECK(m_hat == doctest::Approx(g).epsilon(1e-6));
}

TEST_CASE("reset then N steps equals a fresh optimizer") {
  std::mt19937_64 rng(54);
  Params a(rng, 3);
  Params b = a;
  b.ptrs.clear();
  for (auto& p : b.storage) b.ptrs.push_back(&p);
  const auto cfg = schedule(1e-3, 1e-4, 0, 100);

  AdamW used(cfg, a.ptrs);
  std::mt19937_64 noise(1);
  for (int i = 0; i < 7; ++i) {
    a.set_grads(noise);
    used.step(1e-3);
  }
  used.reset();
  // Continue from the same weights with a brand-new optimizer.
  for (std::size_t i = 0; i < a.storage.size(); ++i) b.storage[i].value = a.storage[i].value;
  AdamW fresh(cfg, b.ptrs);

  std::mt19937_64 ga(99), gb(99);
  for (int i = 0; i < 25; ++i) {
    a.set_grads(ga);
    b.set_grads(gb);
    used.step(lr_at(i, cfg));
    fresh.step(lr_at(i, cfg));
  }
  CHECK(a.values() == b.values());
  CHECK(used.state() == fresh.state());
}

TEST_CASE("state round trip is bit-exact") {
  std::mt19937_64 rng(55);
  Params ps(rng, 4);
  AdamW opt(schedule(3e-4, 3e-5, 10, 200), ps.ptrs);
  for (int i = 0; i < 3; ++i) {
    ps.set_grads(rng);
    opt.step(1e-3);
  }
  const auto bytes = serialize(opt.state());
  const auto back = deserialize_optimizer_state(bytes);
  CHECK(back == opt.state());
  CHECK(serialize(back) == bytes);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(deserialize_optimizer_state(truncated), FormatError);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_optimizer_state(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  CHECK_THROWS_AS(deserialize_optimizer_state(bad_version), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_optimizer_state(trailing), FormatError);
}

TEST_CASE("save, load and continue equals uninterrupted steps") {
  std::mt19937_64 rng(56);
  Params a(rng, 2);
  Params b = a;
  b.ptrs.clear();
  for (auto& p : b.storage) b.ptrs.push_back(&p);
  const auto cfg = schedule(1e-3, 1e-4, 3, 40);
  AdamW straight(cfg, a.ptrs);
  AdamW first(cfg, b.ptrs);
  std::mt19937_64 ga(7), gb(7);
  for (int t = 0; t < 10; ++t) {
    a.set_grads(ga);
    straight.step(lr_at(t, cfg));
    b.set_grads(gb);
    first.step(lr_at(t, cfg));
  }
  AdamW second(cfg, b.ptrs);
  second.load_state(deserialize_optimizer_state(serialize(first.state())));
  for (int t = 10; t < 20; ++t) {
    a.set_grads(ga);
    straight.step(lr_at(t, cfg));
    b.set_grads(gb);
    second.step(lr_at(t, cfg));
  }
  CHECK(a.values() == b.values());
}

TEST_CASE("load_state rejects mismatched parameters") {
  std::mt19937_64 rng(57);
  Params a(rng, 2), b(rng, 3);
  AdamW oa(schedule(1e-3, 1e-4, 0, 10), a.ptrs);
  AdamW ob(schedule(1e-3, 1e-4, 0, 10), b.ptrs);
  CHECK_THROWS_AS(ob.load_state(oa.state()), CompatibilityError);
  auto renamed = oa.state();
  renamed.names[0] = "other";
  CHECK_THROWS_AS(oa.load_state(renamed), CompatibilityError);
}

TEST_CASE("non-finite gradients abort the step without side effects") {
  std::mt19937_64 rng(58);
  Params ps(rng, 2);
  AdamW opt(schedule(1e-3, 1e-4, 0, 10), ps.ptrs);
  ps.set_grads(rng);
  opt.step(1e-3);
  const auto before_state = opt.state();
  const auto before_values = ps.values();
  ps.set_grads(rng);
  ps.storage[1].grad[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(1e-3), NonFiniteError);
  CHECK(opt.state() == before_state);
  CHECK(ps.values() == before_values);
  ps.storage[1].grad[2] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(opt.step(1e-3), NonFiniteError);
  CHECK_THROWS_AS(clip_grad_norm(ps.ptrs, 1.0), NonFiniteError);
}

TEST_CASE("global-norm clipping") {
  Parameter<float> a{"a", Tensor({2}), Tensor({2}, {3.0f, 0.0f})};
  Parameter<float> b{"b", Tensor({1}), Tensor({1}, {4.0f})};
  std::vector<Parameter<float>*> ps{&a, &b};
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == 3.0f);
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  const double after = std::sqrt(double(a.grad[0]) * a.grad[0] + double(b.grad[0]) * b.grad[0]);
  CHECK(after == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(after <= 1.0);
}
