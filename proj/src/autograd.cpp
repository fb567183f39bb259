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

#include "tqat/autograd.hpp"

#include <sstream>

namespace tqat {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
  if (nodes_.size() >= UINT32_MAX) throw ContractError("tape is full");
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::variable(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape != this) throw ContractError("op mixes variables from different tapes");
    if (in.id >= nodes_.size()) throw ContractError("op input is not on the tape");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <typename T>
const BasicTensor<T>* Tape<T>::grad_if(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return n.has_grad ? &n.grad : nullptr;
}

template <typename T>
BasicTensor<T>& Tape<T>::grad_acc(std::uint32_t id) {
  Node& n = nodes_.at(id);
  if (!n.has_grad) {
    n.grad = BasicTensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
BasicTensor<T> Tape<T>::grad(Var<T> v) const {
  if (const auto* g = grad_if(v.id)) return *g;
  return BasicTensor<T>(value(v.id).shape());
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("backward: loss is not on this tape");
  if (backward_done_) throw ContractError("backward: tape already consumed");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        to_string(nodes_[loss.id].value.shape()));
  }
  backward_done_ = true;
  grad_acc(loss.id)[0] = T(1);
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (!n.param || !n.has_grad) continue;
    Parameter<T>& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.grad = BasicTensor<T>(p.value.shape());
    auto dst = p.grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace tqat
