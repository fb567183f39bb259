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

// AdamW with decoupled weight decay and a cosine learning-rate schedule
// with linear warmup. The schedule is a function of the global training
// step, independent of the optimizer's own step count, so resetting the
// moments does not rewind the learning rate.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tqat/autograd.hpp"
#include "tqat/tensor.hpp"

namespace tqat {

struct AdamWConfig {
  double lr_peak = 4e-4;
  double lr_min = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 1;

  void validate() const;
  bool operator==(const AdamWConfig&) const = default;
};

// Linear warmup to lr_peak over warmup_steps, then cosine decay to lr_min
// at total_steps, constant afterwards.
double lr_at(std::uint64_t t, const AdamWConfig& cfg);

struct OptimizerState {
  AdamWConfig hp;
  std::uint64_t step_count = 0;
  std::vector<std::string> names;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  bool operator==(const OptimizerState&) const = default;
};

// "TQOP" blob; round trip is bit-exact.
std::vector<std::uint8_t> serialize(const OptimizerState& state);
OptimizerState deserialize_optimizer_state(std::span<const std::uint8_t> bytes);

class AdamW {
 public:
  AdamW(AdamWConfig cfg, std::vector<Parameter<float>*> params);

  // One update with learning rate lr using the gradients currently held by
  // the parameters. A non-finite gradient throws NonFiniteError before any
  // parameter or moment is touched.
  void step(double lr);

  // Zeroes the moments and the step count (bias correction restarts).
  void reset();

  const OptimizerState& state() const noexcept { return state_; }
  const AdamWConfig& config() const noexcept { return state_.hp; }

  // Installs a deserialized state; names and shapes must match the
  // parameters this optimizer was built for.
  void load_state(OptimizerState state);

 private:
  std::vector<Parameter<float>*> params_;
  OptimizerState state_;
};

// Scales all gradients so their global L2 norm is at most max_norm and
// returns the norm before clipping. Throws NonFiniteError on NaN/Inf.
double clip_grad_norm(std::span<Parameter<float>* const> params, double max_norm);

}  // namespace tqat
