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

// Reverse-mode automatic differentiation over a linear tape.
//
// Every operation appends one node whose inputs already live on the tape, so
// the node order is a topological order and backward() is a single reverse
// sweep. Leaves are constants (no gradient), variables (gradient readable
// through Tape::grad) or Parameters (gradient accumulated into
// Parameter::grad once the sweep finishes).

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tqat/tensor.hpp"

namespace tqat {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const BasicTensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
class Tape {
 public:
  // Called with the tape and the node's own id; reads the node's gradient
  // and accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, std::uint32_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(BasicTensor<T> value);
  Var<T> variable(BasicTensor<T> value);
  Var<T> parameter(Parameter<T>& p);

  // Appends an op result. requires_grad is inherited from the inputs; fn is
  // dropped when no input needs a gradient.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);

  const BasicTensor<T>& value(std::uint32_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }

  // Gradient that reached a node, or nullptr.
  const BasicTensor<T>* grad_if(std::uint32_t id) const;

  // Gradient buffer of a node, zero-initialised on first use. Backward rules
  // accumulate into this.
  BasicTensor<T>& grad_acc(std::uint32_t id);

  // Gradient of a variable after backward(); zeros if nothing flowed.
  BasicTensor<T> grad(Var<T> v) const;

  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <typename T>
void backward(Tape<T>& tape, Var<T> loss) {
  tape.backward(loss);
}

namespace ops {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T c);
template <typename T> Var<T> silu(Var<T> a);
template <typename T> Var<T> sum(Var<T> a);

// [m x k] * [k x n]
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// [m x k] * [n x k]^T, the linear-layer form x * W^T.
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);
// matmul_nt whose forward value the caller has already computed by an exact
// evaluation of the same product; the backward rule is matmul_nt's.
template <typename T> Var<T> matmul_nt_exact(Var<T> a, Var<T> b, BasicTensor<T> value);
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);

// Forward value passes through; no gradient flows back.
template <typename T> Var<T> detach(Var<T> a);

inline constexpr double kRmsNormEps = 1e-6;

// Non-parametric RMS normalisation over the last dimension.
template <typename T> Var<T> rmsnorm(Var<T> x, double eps = kRmsNormEps);

// Row-wise softmax over the last dimension.
template <typename T> Var<T> softmax(Var<T> x);

// Mean over rows of -log softmax(logits)[target]; logits is [... x V].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const Token> targets);

// Gathers rows of table [V x d] -> [ids.size() x d].
template <typename T> Var<T> embedding(Var<T> table, std::span<const Token> ids);

// Multi-head causal self-attention over q, k, v of shape [batch*seq x d].
template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch, std::size_t seq,
                        std::size_t heads);

// (1 - lambda) * x + lambda * x_hat in the forward pass, identity Jacobian
// with respect to x; x_hat enters as a constant.
template <typename T> Var<T> softquant(Var<T> x, const BasicTensor<T>& x_hat, double lambda);

}  // namespace ops
}  // namespace tqat
