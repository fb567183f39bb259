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

// Randomized finite-difference battery over every differentiable op, shared
// by the unit tests and the acceptance runner.

#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "test_util.hpp"
#include "tqat/autograd.hpp"

namespace tqat::testing {

template <typename T>
struct OpCase {
  std::string name;
  std::function<std::vector<BasicTensor<T>>(std::mt19937_64&)> make_inputs;
  std::function<Var<T>(const std::vector<Var<T>>&)> op;
};

template <typename T>
constexpr double fd_step() {
  return std::is_same_v<T, float> ? 1e-2 : 1e-4;
}

template <typename T>
constexpr double fd_tolerance() {
  return std::is_same_v<T, float> ? 1e-3 : 1e-5;
}

// Worst relative error of `trials` randomized gradient checks. Random output
// weights keep identities such as sum(softmax) == 1 from hiding errors.
template <typename T>
double worst_error(const OpCase<T>& c, std::uint64_t seed, int trials = 20) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<BasicTensor<T>> inputs = c.make_inputs(rng);
    Tape<T> probe;
    std::vector<Var<T>> probe_vars;
    for (const auto& x : inputs) probe_vars.push_back(probe.constant(x));
    const auto weights = random_tensor<T>(c.op(probe_vars).shape(), rng);
    LossFn<T> f = [&](Tape<T>&, const std::vector<Var<T>>& vars) {
      Var<T> out = c.op(vars);
      return ops::sum(ops::mul(out, out.tape->constant(weights)));
    };
    worst = std::max(worst, grad_check<T>(f, inputs, fd_step<T>()).rel_error);
  }
  return worst;
}

template <typename T>
std::vector<OpCase<T>> op_cases() {
  using Vars = std::vector<Var<T>>;
  using Inputs = std::vector<BasicTensor<T>>;
  auto shapes = [](std::vector<Shape> s, double lo = -1.0, double hi = 1.0) {
    return [s, lo, hi](std::mt19937_64& rng) {
      Inputs out;
      for (const auto& shape : s) out.push_back(random_tensor<T>(shape, rng, lo, hi));
      return out;
    };
  };
  const std::vector<Token> targets{0, 3, 4, 1};
  const std::vector<Token> ids{2, 0, 2, 5};
  return {
      {"add", shapes({{3, 4}, {3, 4}}), [](const Vars& v) { return ops::add(v[0], v[1]); }},
      {"sub", shapes({{3, 4}, {3, 4}}), [](const Vars& v) { return ops::sub(v[0], v[1]); }},
      {"mul", shapes({{3, 4}, {3, 4}}), [](const Vars& v) { return ops::mul(v[0], v[1]); }},
      {"scale", shapes({{5}}), [](const Vars& v) { return ops::scale(v[0], T(-1.7)); }},
      {"silu", shapes({{4, 3}}, -3.0, 3.0), [](const Vars& v) { return ops::silu(v[0]); }},
      {"sum", shapes({{2, 3}}), [](const Vars& v) { return ops::sum(v[0]); }},
      {"matmul", shapes({{3, 4}, {4, 5}}), [](const Vars& v) { return ops::matmul(v[0], v[1]); }},
      {"matmul_nt", shapes({{3, 4}, {5, 4}}), [](const Vars& v) { return ops::matmul_nt(v[0], v[1]); }},
      {"transpose", shapes({{3, 5}}), [](const Vars& v) { return ops::transpose(v[0]); }},
      {"reshape", shapes({{2, 6}}), [](const Vars& v) { return ops::reshape(v[0], Shape{3, 4}); }},
      {"rmsnorm", shapes({{3, 6}}), [](const Vars& v) { return ops::rmsnorm(v[0]); }},
      {"softmax", shapes({{3, 5}}, -2.0, 2.0), [](const Vars& v) { return ops::softmax(v[0]); }},
      {"softmax_cross_entropy", shapes({{4, 5}}, -2.0, 2.0),
       [targets](const Vars& v) { return ops::softmax_cross_entropy(v[0], targets); }},
      {"embedding", shapes({{6, 3}}), [ids](const Vars& v) { return ops::embedding(v[0], ids); }},
      // batch 2, seq 3, 2 heads of width 2
      {"causal_attention", shapes({{6, 4}, {6, 4}, {6, 4}}),
       [](const Vars& v) { return ops::causal_attention(v[0], v[1], v[2], 2, 3, 2); }},
  };
}

}  // namespace tqat::testing
