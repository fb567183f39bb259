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

#include "tqat/optim.hpp"

#include <cmath>
#include <numbers>

#include "tqat/error.hpp"
#include "tqat/serialize.hpp"

namespace tqat {
namespace {

constexpr std::string_view kMagic = "TQOP";
constexpr std::uint32_t kVersion = 1;

void check_finite_grads(std::span<Parameter<float>* const> params) {
  for (const auto* p : params) {
    for (float g : p->grad.data()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
}

}  // namespace

void AdamWConfig::validate() const {
  if (!(lr_peak >= 0 && lr_min >= 0)) throw ContractError("learning rates must be non-negative");
  if (lr_min > lr_peak) throw ContractError("lr_min exceeds lr_peak");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ContractError("betas must lie in [0, 1)");
  if (!(eps > 0)) throw ContractError("eps must be positive");
  if (!(weight_decay >= 0)) throw ContractError("weight_decay must be non-negative");
  if (total_steps == 0) throw ContractError("total_steps must be positive");
  if (warmup_steps > total_steps) throw ContractError("warmup_steps exceeds total_steps");
}

double lr_at(std::uint64_t t, const AdamWConfig& cfg) {
  if (t < cfg.warmup_steps) {
    return cfg.lr_peak * static_cast<double>(t + 1) / static_cast<double>(cfg.warmup_steps);
  }
  if (t >= cfg.total_steps) return cfg.lr_min;
  const double progress = static_cast<double>(t - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr_min + (cfg.lr_peak - cfg.lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(AdamWConfig cfg, std::vector<Parameter<float>*> params) : params_(std::move(params)) {
  cfg.validate();
  state_.hp = cfg;
  for (const auto* p : params_) {
    state_.names.push_back(p->name);
    state_.m.emplace_back(p->value.shape());
    state_.v.emplace_back(p->value.shape());
  }
}

void AdamW::step(double lr) {
  check_finite_grads(params_);
  const auto& hp = state_.hp;
  const std::uint64_t k = state_.step_count + 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(k));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(k));
  const double decay = 1.0 - lr * hp.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    if (p->grad.size() != p->value.size()) {
      throw DimensionError("gradient of '" + p->name + "' does not match its value");
    }
    float* theta = p->value.ptr();
    const float* g = p->grad.ptr();
    float* m = state_.m[i].ptr();
    float* v = state_.v[i].ptr();
    for (std::size_t j = 0, n = p->value.size(); j < n; ++j) {
      const double gj = g[j];
      const double mj = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
      const double vj = hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + hp.eps);
      theta[j] = static_cast<float>(theta[j] * decay - lr * update);
    }
  }
  state_.step_count = k;
}

void AdamW::reset() {
  for (auto& m : state_.m) m = Tensor(m.shape());
  for (auto& v : state_.v) v = Tensor(v.shape());
  state_.step_count = 0;
}

void AdamW::load_state(OptimizerState state) {
  if (state.names.size() != params_.size()) {
    throw CompatibilityError("optimizer state holds " + std::to_string(state.names.size()) +
                             " parameters, model has " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (state.names[i] != params_[i]->name || state.m[i].shape() != params_[i]->value.shape() ||
        state.v[i].shape() != params_[i]->value.shape()) {
      throw CompatibilityError("optimizer state for '" + state.names[i] + "' does not match '" +
                               params_[i]->name + "'");
    }
  }
  state.hp.validate();
  state_ = std::move(state);
}

std::vector<std::uint8_t> serialize(const OptimizerState& state) {
  ByteWriter w;
  w.put_magic(kMagic);
  w.put(kVersion);
  const auto& hp = state.hp;
  for (double x : {hp.lr_peak, hp.lr_min, hp.beta1, hp.beta2, hp.eps, hp.weight_decay}) w.put(x);
  w.put(hp.warmup_steps);
  w.put(hp.total_steps);
  w.put(state.step_count);
  w.put(static_cast<std::uint32_t>(state.names.size()));
  for (std::size_t i = 0; i < state.names.size(); ++i) {
    w.put_string(state.names[i]);
    const auto& shape = state.m[i].shape();
    w.put(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.put(static_cast<std::uint64_t>(d));
    w.put_array(state.m[i].data());
    w.put_array(state.v[i].data());
  }
  return std::move(w.bytes());
}

OptimizerState deserialize_optimizer_state(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic, "optimizer state");
  if (auto version = r.get<std::uint32_t>(); version != kVersion) {
    throw FormatError("unsupported optimizer state version " + std::to_string(version));
  }
  OptimizerState s;
  auto& hp = s.hp;
  for (double* x : {&hp.lr_peak, &hp.lr_min, &hp.beta1, &hp.beta2, &hp.eps, &hp.weight_decay}) {
    *x = r.get<double>();
  }
  hp.warmup_steps = r.get<std::uint64_t>();
  hp.total_steps = r.get<std::uint64_t>();
  s.step_count = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    s.names.push_back(r.get_string());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("optimizer tensor rank out of range");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      if (d != 0 && n > r.remaining() / d) throw FormatError("optimizer tensor larger than data");
      n *= d;
    }
    s.m.emplace_back(shape, r.get_array<float>(n));
    s.v.emplace_back(shape, r.get_array<float>(n));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after optimizer state");
  return s;
}

double clip_grad_norm(std::span<Parameter<float>* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (float g : p->grad.data()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) check_finite_grads(params);
  if (!std::isfinite(norm)) throw NonFiniteError("gradient norm overflow");
  if (max_norm > 0 && norm > max_norm) {
    const float factor = static_cast<float>(max_norm / (norm + 1e-6));
    for (auto* p : params) {
      for (float& g : p->grad.data()) g *= factor;
    }
  }
  return norm;
}

}  // namespace tqat
