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

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "tqat/autograd.hpp"
#include "tqat/functional.hpp"
#include "tqat/linalg.hpp"
#include "tqat/quant.hpp"

namespace tqat::ops {
namespace {

using linalg::Op;

template <typename T>
const BasicTensor<T>& grad_of(Tape<T>& tape, std::uint32_t self) {
  return *tape.grad_if(self);
}

template <typename T>
bool wants(Tape<T>& tape, Var<T> v) {
  return tape.requires_grad(v.id);
}

template <typename T>
void add_into(Tape<T>& tape, Var<T> dst, std::span<const T> g, T factor = T(1)) {
  auto out = tape.grad_acc(dst.id).data();
  if (factor == T(1)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += factor * g[i];
  }
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const char* op, Var<T> a) {
  if (a.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  BasicTensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::uint32_t self) {
    const auto g = grad_of(tape, self).data();
    if (wants(tape, a)) add_into(tape, a, g);
    if (wants(tape, b)) add_into(tape, b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  BasicTensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::uint32_t self) {
    const auto g = grad_of(tape, self).data();
    if (wants(tape, a)) add_into(tape, a, g);
    if (wants(tape, b)) add_into(tape, b, g, T(-1));
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  BasicTensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::uint32_t self) {
    const auto g = grad_of(tape, self).data();
    const auto av = a.value().data();
    const auto bv = b.value().data();
    if (wants(tape, a)) {
      auto da = tape.grad_acc(a.id).data();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (wants(tape, b)) {
      auto db = tape.grad_acc(b.id).data();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  BasicTensor<T> out = a.value();
  for (auto& x : out.data()) x *= c;
  return a.tape->record(std::move(out), {a}, [a, c](Tape<T>& tape, std::uint32_t self) {
    add_into(tape, a, grad_of(tape, self).data(), c);
  });
}

template <typename T>
Var<T> silu(Var<T> a) {
  BasicTensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = functional::silu(x[i]);
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    const auto g = grad_of(tape, self).data();
    const auto x = a.value().data();
    auto da = tape.grad_acc(a.id).data();
    for (std::size_t i = 0; i < da.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-x[i]));
      da[i] += g[i] * s * (T(1) + x[i] * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  double total = 0.0;
  for (auto x : a.value().data()) total += x;
  BasicTensor<T> out(Shape{}, {static_cast<T>(total)});
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    const T g = grad_of(tape, self)[0];
    for (auto& d : tape.grad_acc(a.id).data()) d += g;
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  BasicTensor<T> out(Shape{m, n});
  linalg::gemm<T>(Op::none, Op::none, m, n, k, a.value().ptr(), k, b.value().ptr(), n, out.ptr(), n,
                  false);
  return a.tape->record(std::move(out), {a, b}, [a, b, m, n, k](Tape<T>& tape, std::uint32_t self) {
    const T* g = grad_of(tape, self).ptr();
    if (wants(tape, a)) {  // dA = G * B^T
      linalg::gemm<T>(Op::none, Op::transpose, m, k, n, g, n, b.value().ptr(), n,
                      tape.grad_acc(a.id).ptr(), k, true);
    }
    if (wants(tape, b)) {  // dB = A^T * G
      linalg::gemm<T>(Op::transpose, Op::none, k, n, m, a.value().ptr(), k, g, n,
                      tape.grad_acc(b.id).ptr(), n, true);
    }
  });
}

template <typename T>
Var<T> record_matmul_nt(Var<T> a, Var<T> b, BasicTensor<T> out, std::size_t m, std::size_t n,
                        std::size_t k) {
  return a.tape->record(std::move(out), {a, b}, [a, b, m, n, k](Tape<T>& tape, std::uint32_t self) {
    const T* g = grad_of(tape, self).ptr();
    if (wants(tape, a)) {  // dA = G * B
      linalg::gemm<T>(Op::none, Op::none, m, k, n, g, n, b.value().ptr(), k,
                      tape.grad_acc(a.id).ptr(), k, true);
    }
    if (wants(tape, b)) {  // dB = G^T * A
      linalg::gemm<T>(Op::transpose, Op::none, n, k, m, g, n, a.value().ptr(), k,
                      tape.grad_acc(b.id).ptr(), k, true);
    }
  });
}

template <typename T>
void check_matmul_nt(const char* what, Var<T> a, Var<T> b) {
  require_matrix(what, a);
  require_matrix(what, b);
  if (b.shape()[1] != a.shape()[1]) {
    throw DimensionError(std::string(what) + ": feature dimensions differ, " + to_string(a.shape()) +
                         " x " + to_string(b.shape()) + "^T");
  }
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  check_matmul_nt("matmul_nt", a, b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  BasicTensor<T> out(Shape{m, n});
  linalg::gemm<T>(Op::none, Op::transpose, m, n, k, a.value().ptr(), k, b.value().ptr(), k,
                  out.ptr(), n, false);
  return record_matmul_nt(a, b, std::move(out), m, n, k);
}

template <typename T>
Var<T> matmul_nt_exact(Var<T> a, Var<T> b, BasicTensor<T> value) {
  check_matmul_nt("matmul_nt_exact", a, b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (value.shape() != Shape{m, n}) {
    throw DimensionError("matmul_nt_exact: value shape " + to_string(value.shape()) +
                         " does not match " + to_string(Shape{m, n}));
  }
  return record_matmul_nt(a, b, std::move(value), m, n, k);
}

template <typename T>
Var<T> transpose(Var<T> a) {
  require_matrix("transpose", a);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  BasicTensor<T> out(Shape{c, r});
  const T* src = a.value().ptr();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  }
  return a.tape->record(std::move(out), {a}, [a, r, c](Tape<T>& tape, std::uint32_t self) {
    const auto& g = grad_of(tape, self);
    auto da = tape.grad_acc(a.id).data();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += g[j * r + i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (numel(shape) != a.value().size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " +
                         to_string(shape));
  }
  BasicTensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    add_into(tape, a, grad_of(tape, self).data());
  });
}

template <typename T>
Var<T> detach(Var<T> a) {
  return a.tape->constant(a.value());
}

template <typename T>
Var<T> rmsnorm(Var<T> x, double eps) {
  const std::size_t d = x.value().cols();
  if (d == 0) throw DimensionError("rmsnorm: empty feature dimension");
  const std::size_t rows = x.value().rows();
  BasicTensor<T> out(x.shape());
  auto inv = std::make_shared<std::vector<T>>(rows);
  functional::rmsnorm_rows(x.value().ptr(), rows, d, eps, out.ptr(), inv->data());
  return x.tape->record(std::move(out), {x}, [x, rows, d, inv](Tape<T>& tape, std::uint32_t self) {
    const T* g = grad_of(tape, self).ptr();
    const T* yv = tape.value(self).ptr();
    T* dx = tape.grad_acc(x.id).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      double gy = 0.0;
      for (std::size_t j = 0; j < d; ++j) gy += static_cast<double>(g[r * d + j]) * yv[r * d + j];
      const T mean_gy = static_cast<T>(gy / static_cast<double>(d));
      const T ir = (*inv)[r];
      for (std::size_t j = 0; j < d; ++j) {
        dx[r * d + j] += (g[r * d + j] - yv[r * d + j] * mean_gy) * ir;
      }
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  const std::size_t n = x.value().cols();
  const std::size_t rows = x.value().rows();
  BasicTensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    functional::softmax_row(x.value().ptr() + r * n, n, n, out.ptr() + r * n);
  }
  return x.tape->record(std::move(out), {x}, [x, rows, n](Tape<T>& tape, std::uint32_t self) {
    const T* g = grad_of(tape, self).ptr();
    const T* y = tape.value(self).ptr();
    T* dx = tape.grad_acc(x.id).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(g[r * n + j]) * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        dx[r * n + j] += y[r * n + j] * (g[r * n + j] - static_cast<T>(dot));
      }
    }
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const Token> targets) {
  const auto& lv = logits.value();
  if (lv.rank() < 2) throw DimensionError("softmax_cross_entropy: logits must be [... x V]");
  const std::size_t v = lv.cols();
  const std::size_t rows = lv.rows();
  if (targets.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(rows) + " rows but " +
                         std::to_string(targets.size()) + " targets");
  }
  auto probs = std::make_shared<std::vector<T>>(rows * v);
  auto tgt = std::make_shared<std::vector<Token>>(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const Token t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("softmax_cross_entropy: target id " + std::to_string(t) +
                       " outside [0, " + std::to_string(v) + ")");
    }
    const T* row = lv.ptr() + r * v;
    const T mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    const double log_z = std::log(z);
    total += log_z - static_cast<double>(row[t] - mx);
    T* p = probs->data() + r * v;
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx) - log_z));
    }
  }
  BasicTensor<T> out(Shape{}, {static_cast<T>(total / static_cast<double>(rows))});
  return logits.tape->record(
      std::move(out), {logits}, [logits, probs, tgt, rows, v](Tape<T>& tape, std::uint32_t self) {
        const T g = grad_of(tape, self)[0] / static_cast<T>(rows);
        T* dl = tape.grad_acc(logits.id).ptr();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* p = probs->data() + r * v;
          T* d = dl + r * v;
          for (std::size_t j = 0; j < v; ++j) d[j] += g * p[j];
          d[(*tgt)[r]] -= g;
        }
      });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const Token> ids) {
  require_matrix("embedding", table);
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  BasicTensor<T> out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Token id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
    std::copy_n(table.value().ptr() + id * d, d, out.ptr() + i * d);
  }
  auto idx = std::make_shared<std::vector<Token>>(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {table}, [table, idx, d](Tape<T>& tape, std::uint32_t self) {
    const T* g = grad_of(tape, self).ptr();
    T* dt = tape.grad_acc(table.id).ptr();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      T* row = dt + (*idx)[i] * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
    }
  });
}

template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch, std::size_t seq,
                        std::size_t heads) {
  require_same_shape("causal_attention", q, k);
  require_same_shape("causal_attention", q, v);
  require_matrix("causal_attention", q);
  const std::size_t d = q.shape()[1];
  if (q.shape()[0] != batch * seq) {
    throw DimensionError("causal_attention: expected " + std::to_string(batch * seq) +
                         " rows, got " + to_string(q.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("causal_attention: d=" + std::to_string(d) +
                         " not divisible by heads=" + std::to_string(heads));
  }
  auto probs = std::make_shared<std::vector<T>>(batch * heads * seq * seq);
  BasicTensor<T> out(q.shape());
  functional::attention_forward(q.value().ptr(), k.value().ptr(), v.value().ptr(), batch, seq,
                                heads, d, out.ptr(), probs->data());
  return q.tape->record(
      std::move(out), {q, k, v},
      [q, k, v, probs, batch, seq, heads, d](Tape<T>& tape, std::uint32_t self) {
        const std::size_t dh = d / heads;
        const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        const T* g = grad_of(tape, self).ptr();
        const bool need_q = wants(tape, q), need_k = wants(tape, k), need_v = wants(tape, v);
        T* dq = need_q ? tape.grad_acc(q.id).ptr() : nullptr;
        T* dk = need_k ? tape.grad_acc(k.id).ptr() : nullptr;
        T* dv = need_v ? tape.grad_acc(v.id).ptr() : nullptr;
        std::vector<T> dp(seq * seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * seq * d + h * dh;
            const T* p = probs->data() + (b * heads + h) * seq * seq;
            if (need_v) {  // dV = P^T * dO
              linalg::gemm<T>(Op::transpose, Op::none, seq, dh, seq, p, seq, g + off, d, dv + off,
                              d, true);
            }
            if (!need_q && !need_k) continue;
            // dP = dO * V^T, then dS = P * (dP - rowsum(P * dP)) * scale
            linalg::gemm<T>(Op::none, Op::transpose, seq, seq, dh, g + off, d, v.value().ptr() + off,
                            d, dp.data(), seq, false);
            for (std::size_t i = 0; i < seq; ++i) {
              T* row = dp.data() + i * seq;
              const T* prow = p + i * seq;
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) dot += static_cast<double>(row[j]) * prow[j];
              const T dt = static_cast<T>(dot);
              for (std::size_t j = 0; j <= i; ++j) row[j] = prow[j] * (row[j] - dt) * sc;
              for (std::size_t j = i + 1; j < seq; ++j) row[j] = T(0);
            }
            if (need_q) {  // dQ = dS * K
              linalg::gemm<T>(Op::none, Op::none, seq, dh, seq, dp.data(), seq, k.value().ptr() + off,
                              d, dq + off, d, true);
            }
            if (need_k) {  // dK = dS^T * Q
              linalg::gemm<T>(Op::transpose, Op::none, seq, dh, seq, dp.data(), seq,
                              q.value().ptr() + off, d, dk + off, d, true);
            }
          }
        }
      });
}

template <typename T>
Var<T> softquant(Var<T> x, const BasicTensor<T>& x_hat, double lambda) {
  BasicTensor<T> out = softquant_value(x.value(), x_hat, lambda);
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& tape, std::uint32_t self) {
    add_into(tape, x, grad_of(tape, self).data());
  });
}

#define TQAT_INSTANTIATE(T)                                                                   \
  template Var<T> add<T>(Var<T>, Var<T>);                                                    \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                    \
  template Var<T> scale<T>(Var<T>, T);                                                       \
  template Var<T> silu<T>(Var<T>);                                                           \
  template Var<T> sum<T>(Var<T>);                                                            \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                 \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                              \
  template Var<T> matmul_nt_exact<T>(Var<T>, Var<T>, BasicTensor<T>);                        \
  template Var<T> transpose<T>(Var<T>);                                                      \
  template Var<T> reshape<T>(Var<T>, Shape);                                                 \
  template Var<T> detach<T>(Var<T>);                                                         \
  template Var<T> rmsnorm<T>(Var<T>, double);                                                \
  template Var<T> softmax<T>(Var<T>);                                                        \
  template Var<T> softmax_cross_entropy<T>(Var<T>, std::span<const Token>);                  \
  template Var<T> embedding<T>(Var<T>, std::span<const Token>);                              \
  template Var<T> causal_attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t,      \
                                      std::size_t);                                          \
  template Var<T> softquant<T>(Var<T>, const BasicTensor<T>&, double);

TQAT_INSTANTIATE(float)
TQAT_INSTANTIATE(double)
#undef TQAT_INSTANTIATE

}  // namespace tqat::ops
