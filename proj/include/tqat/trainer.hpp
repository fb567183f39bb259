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

// Continual pre-training controller. A run is N optimizer steps over the
// shared batch sequence x_0 .. x_{N-1}; step k (1-based) consumes x_{k-1}.
// The plan decides each step's quantization mode:
//
//   k <= s          full precision (lambda = 0)
//   s < k <= t*     soft, lambda = lambda_schedule(k)
//   k > t*          quantized (lambda = 1)
//
// full16 never quantizes and full158 quantizes from step 1. The optimizer
// reset of a cold cpt run happens right before step t* + 1.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tqat/data.hpp"
#include "tqat/nn.hpp"
#include "tqat/optim.hpp"
#include "tqat/quant.hpp"

namespace tqat {

enum class Regime : std::uint8_t { full16 = 0, full158 = 1, cpt = 2 };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view text);

struct RunPlan {
  std::uint64_t total_steps = 1;
  Regime regime = Regime::full16;
  std::uint64_t s = 0;
  std::uint64_t t_star = 0;
  bool retain_optimizer = false;
  bool phase_in = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::uint64_t hash() const;

  LinearMode mode_at(std::uint64_t step) const;
  double lambda_at(std::uint64_t step) const;
  // Step before which the optimizer transition runs; 0 when there is none.
  std::uint64_t transition_step() const { return regime == Regime::cpt ? t_star + 1 : 0; }

  bool operator==(const RunPlan&) const = default;
};

struct MetricsRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double lambda = 0.0;
  LinearMode phase = LinearMode::full_precision;
  std::uint64_t tokens = 0;
  double grad_norm = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

// One JSON object per line: step, loss, lr, lambda, phase, tokens, grad_norm.
std::string to_json_line(const MetricsRecord& r);
MetricsRecord parse_metrics_line(std::string_view line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// Exponential moving average, alpha = 2 / (window + 1), y_0 = x_0.
std::vector<double> smooth(std::span<const double> xs, std::size_t window = 64);

struct Checkpoint {
  ModelConfig config;
  LinearMode mode = LinearMode::full_precision;
  double lambda = 0.0;
  bool transitioned = false;
  RunPlan plan;
  std::uint64_t plan_hash = 0;  // plan.hash(), checked on decode
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<OptimizerState> optimizer;  // absent: retention impossible
  std::string rng_state;
  std::uint64_t global_step = 0;

  bool retain_possible() const noexcept { return optimizer.has_value(); }
  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Throws CompatibilityError when the stored config differs from expected.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

// Model with the checkpoint's weights and mode.
TransformerModel<float> model_from_checkpoint(const Checkpoint& ckpt, QuantConfig quant = {});

struct TrainConfig {
  ModelConfig model;
  QuantConfig quant;
  AdamWConfig optim;  // warmup_steps/total_steps are derived from the plan
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;
  std::size_t batch = 8;
  std::size_t seq = 64;

  AdamWConfig optimizer_config(const RunPlan& plan) const;
};

class Trainer {
 public:
  // Builds and initialises the model from plan.seed.
  Trainer(TrainConfig cfg, RunPlan plan, data::BatchStream stream);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Runs the next step. A non-finite loss or gradient writes a diagnostic
  // checkpoint (when a path is set) and throws NonFiniteError.
  MetricsRecord step();

  // Steps until total_steps; on_record sees every record.
  void run(const std::function<void(const MetricsRecord&)>& on_record = {});

  // Switches the model to quantized mode and resets the optimizer unless
  // retain is set. Throws ContractError when called a second time.
  void transition(bool retain);

  Checkpoint checkpoint() const;
  // Restores model, optimizer, RNG and step. The checkpoint's plan must
  // agree with this trainer's plan on every step already taken.
  void restore(const Checkpoint& ckpt);

  std::uint64_t global_step() const noexcept { return step_; }
  bool transitioned() const noexcept { return transitioned_; }
  bool done() const noexcept { return step_ >= plan_.total_steps; }
  const RunPlan& plan() const noexcept { return plan_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  TransformerModel<float>& model() noexcept { return model_; }
  const TransformerModel<float>& model() const noexcept { return model_; }
  AdamW& optimizer() noexcept { return optimizer_; }
  const data::BatchStream& stream() const noexcept { return stream_; }

  void set_diagnostic_path(std::filesystem::path p) { diagnostic_path_ = std::move(p); }

 private:
  bool prefix_compatible(const Checkpoint& ckpt) const;

  TrainConfig cfg_;
  RunPlan plan_;
  data::BatchStream stream_;
  TransformerModel<float> model_;
  AdamW optimizer_;
  std::mt19937_64 rng_;
  std::uint64_t step_ = 0;
  bool transitioned_ = false;
  std::filesystem::path diagnostic_path_;
};

}  // namespace tqat
