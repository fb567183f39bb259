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

#include "tqat/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tqat/error.hpp"
#include "tqat/serialize.hpp"

namespace tqat {
namespace {

constexpr std::string_view kMagic = "TQAT";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void put_config(ByteWriter& w, const ModelConfig& c) {
  for (auto v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.max_seq_len, c.ffn_multiplier}) w.put(v);
  w.put(static_cast<std::uint8_t>(c.tie_embeddings));
}

ModelConfig get_config(ByteReader& r) {
  ModelConfig c;
  for (auto* v : {&c.vocab_size, &c.d_model, &c.n_layers, &c.n_heads, &c.max_seq_len, &c.ffn_multiplier}) {
    *v = r.get<std::uint32_t>();
  }
  c.tie_embeddings = r.get<std::uint8_t>() != 0;
  return c;
}

void put_plan(ByteWriter& w, const RunPlan& p) {
  w.put(p.total_steps);
  w.put(static_cast<std::uint8_t>(p.regime));
  w.put(p.s);
  w.put(p.t_star);
  w.put(static_cast<std::uint8_t>(p.retain_optimizer));
  w.put(static_cast<std::uint8_t>(p.phase_in));
  w.put(p.seed);
}

RunPlan get_plan(ByteReader& r) {
  RunPlan p;
  p.total_steps = r.get<std::uint64_t>();
  const auto regime = r.get<std::uint8_t>();
  if (regime > 2) throw FormatError("checkpoint: unknown regime code");
  p.regime = static_cast<Regime>(regime);
  p.s = r.get<std::uint64_t>();
  p.t_star = r.get<std::uint64_t>();
  p.retain_optimizer = r.get<std::uint8_t>() != 0;
  p.phase_in = r.get<std::uint8_t>() != 0;
  p.seed = r.get<std::uint64_t>();
  return p;
}

}  // namespace

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::full16: return "full16";
    case Regime::full158: return "full158";
    case Regime::cpt: return "cpt";
  }
  return "unknown";
}

Regime parse_regime(std::string_view text) {
  if (text == "full16") return Regime::full16;
  if (text == "full158") return Regime::full158;
  if (text == "cpt") return Regime::cpt;
  throw ContractError("unknown regime '" + std::string(text) + "'");
}

void RunPlan::validate() const {
  if (total_steps == 0) throw ContractError("run plan: total_steps must be positive");
  if (regime != Regime::cpt) return;
  if (!(s <= t_star && t_star < total_steps)) {
    throw ContractError("run plan: need 0 <= s <= t_star < total_steps (s=" + std::to_string(s) +
                        ", t_star=" + std::to_string(t_star) + ", N=" + std::to_string(total_steps) + ")");
  }
  if (!phase_in && s != t_star) throw ContractError("run plan: s must equal t_star without phase-in");
}

std::uint64_t RunPlan::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint64_t v : {total_steps, static_cast<std::uint64_t>(regime), s, t_star,
                          static_cast<std::uint64_t>(retain_optimizer),
                          static_cast<std::uint64_t>(phase_in), seed}) {
    h = fnv1a(h, v);
  }
  return h;
}

LinearMode RunPlan::mode_at(std::uint64_t step) const {
  switch (regime) {
    case Regime::full16: return LinearMode::full_precision;
    case Regime::full158: return LinearMode::quantized;
    case Regime::cpt: break;
  }
  if (step <= s) return LinearMode::full_precision;
  if (step <= t_star) return LinearMode::soft;
  return LinearMode::quantized;
}

double RunPlan::lambda_at(std::uint64_t step) const {
  switch (regime) {
    case Regime::full16: return 0.0;
    case Regime::full158: return 1.0;
    case Regime::cpt: break;
  }
  return lambda_schedule(step, ScheduleConfig{s, t_star});
}

std::string to_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["lr"] = r.lr;
  j["lambda"] = r.lambda;
  j["phase"] = std::string(to_string(r.phase));
  j["tokens"] = r.tokens;
  j["grad_norm"] = r.grad_norm;
  return j.dump();
}

MetricsRecord parse_metrics_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MetricsRecord r;
    r.step = j.at("step").get<std::uint64_t>();
    r.loss = j.at("loss").get<double>();
    r.lr = j.at("lr").get<double>();
    r.lambda = j.at("lambda").get<double>();
    r.phase = parse_linear_mode(j.at("phase").get<std::string>());
    r.tokens = j.at("tokens").get<std::uint64_t>();
    if (j.contains("grad_norm")) r.grad_norm = j["grad_norm"].get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics record: ") + e.what());
  }
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file '" + path.string() + "'");
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_metrics_line(line));
    if (out.size() > 1 && out.back().step <= out[out.size() - 2].step) {
      throw FormatError("metrics file '" + path.string() + "': steps not strictly increasing");
    }
  }
  return out;
}

std::vector<double> smooth(std::span<const double> xs, std::size_t window) {
  if (window == 0) throw ContractError("smooth: window must be at least 1");
  std::vector<double> ys;
  ys.reserve(xs.size());
  const double alpha = 2.0 / (static_cast<double>(window) + 1.0);
  for (double x : xs) ys.push_back(ys.empty() ? x : alpha * x + (1.0 - alpha) * ys.back());
  return ys;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_magic(kMagic);
  w.put(kVersion);
  put_config(w, ckpt.config);
  w.put(static_cast<std::uint8_t>(ckpt.mode));
  w.put(ckpt.lambda);
  w.put(static_cast<std::uint8_t>(ckpt.transitioned));
  put_plan(w, ckpt.plan);
  w.put(ckpt.plan.hash());

  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    w.put_string(name);
    w.put(kDtypeF32);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    w.put(offset);
    offset += t.size() * sizeof(float);
  }
  w.put(offset);
  for (const auto& entry : ckpt.tensors) w.put_array(entry.second.data());

  w.put(static_cast<std::uint8_t>(ckpt.optimizer.has_value()));
  if (ckpt.optimizer) {
    const auto blob = serialize(*ckpt.optimizer);
    w.put(static_cast<std::uint64_t>(blob.size()));
    w.put_bytes(blob);
  }
  w.put_string(ckpt.rng_state);
  w.put(ckpt.global_step);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic, "checkpoint");
  if (auto version = r.get<std::uint32_t>(); version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.config = get_config(r);
  const auto mode = r.get<std::uint8_t>();
  if (mode > 2) throw FormatError("checkpoint: unknown mode code");
  c.mode = static_cast<LinearMode>(mode);
  c.lambda = r.get<double>();
  c.transitioned = r.get<std::uint8_t>() != 0;
  c.plan = get_plan(r);
  c.plan_hash = r.get<std::uint64_t>();
  if (c.plan_hash != c.plan.hash()) throw FormatError("checkpoint: plan hash mismatch");

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  const auto count = r.get<std::uint32_t>();
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.get_string();
    if (r.get<std::uint8_t>() != kDtypeF32) throw FormatError("checkpoint: unsupported dtype");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: tensor rank out of range");
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    e.offset = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const auto payload_bytes = r.get<std::uint64_t>();
  if (payload_bytes > r.remaining()) throw FormatError("checkpoint: truncated tensor payload");
  const auto payload = r.get_bytes(static_cast<std::size_t>(payload_bytes));
  for (auto& e : entries) {
    std::size_t n = 1;
    for (auto d : e.shape) {
      if (d != 0 && n > payload.size() / d) throw FormatError("checkpoint: tensor larger than payload");
      n *= d;
    }
    if (e.offset > payload.size() || n * sizeof(float) > payload.size() - e.offset) {
      throw FormatError("checkpoint: tensor '" + e.name + "' outside payload");
    }
    ByteReader tr(payload.subspan(static_cast<std::size_t>(e.offset), n * sizeof(float)));
    c.tensors.emplace_back(e.name, Tensor(e.shape, tr.get_array<float>(n)));
  }

  const auto has_opt = r.get<std::uint8_t>();
  if (has_opt > 1) throw FormatError("checkpoint: bad optimizer flag");
  if (has_opt) {
    const auto len = r.get<std::uint64_t>();
    if (len > r.remaining()) throw FormatError("checkpoint: truncated optimizer section");
    c.optimizer = deserialize_optimizer_state(r.get_bytes(static_cast<std::size_t>(len)));
  }
  c.rng_state = r.get_string();
  c.global_step = r.get<std::uint64_t>();
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.config == expected)) {
    throw CompatibilityError("checkpoint '" + path.string() + "' has a different model config");
  }
  return c;
}

TransformerModel<float> model_from_checkpoint(const Checkpoint& ckpt, QuantConfig quant) {
  TransformerModel<float> model(ckpt.config, quant);
  auto params = model.parameters();
  if (params.size() != ckpt.tensors.size()) throw CompatibilityError("checkpoint: tensor count differs from config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (name != params[i]->name || t.shape() != params[i]->value.shape()) {
      throw CompatibilityError("checkpoint: tensor '" + name + "' does not match '" + params[i]->name + "'");
    }
    params[i]->value = t;
  }
  model.set_mode(ckpt.mode, ckpt.lambda);
  return model;
}

AdamWConfig TrainConfig::optimizer_config(const RunPlan& plan) const {
  AdamWConfig o = optim;
  o.total_steps = plan.total_steps;
  o.warmup_steps = static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(plan.total_steps)));
  return o;
}

Trainer::Trainer(TrainConfig cfg, RunPlan plan, data::BatchStream stream)
    : cfg_(std::move(cfg)),
      plan_(plan),
      stream_(std::move(stream)),
      model_((plan_.validate(), cfg_.model), cfg_.quant),
      optimizer_(cfg_.optimizer_config(plan_), model_.parameters()),
      rng_(plan_.seed) {
  if (stream_.seq() > cfg_.model.max_seq_len) {
    throw ContractError("trainer: sequence length exceeds max_seq_len");
  }
  model_.init(rng_);
  model_.set_mode(plan_.mode_at(0), plan_.lambda_at(0));
}

void Trainer::transition(bool retain) {
  if (transitioned_) throw ContractError("transition: model already transitioned");
  model_.set_mode(LinearMode::quantized);
  if (!retain) optimizer_.reset();
  transitioned_ = true;
}

MetricsRecord Trainer::step() {
  if (done()) throw ContractError("trainer: run already finished");
  const std::uint64_t k = step_ + 1;
  if (plan_.regime == Regime::cpt && k == plan_.transition_step() && !transitioned_) {
    transition(plan_.retain_optimizer);
  }
  const LinearMode mode = plan_.mode_at(k);
  const double lambda = plan_.lambda_at(k);
  model_.set_mode(mode, lambda);

  const auto batch = stream_.batch(k - 1);
  auto params = model_.parameters();
  MetricsRecord rec;
  try {
    Tape<float> tape;
    Var<float> logits = model_.forward(tape, batch.inputs, batch.batch, batch.seq);
    Var<float> loss = ops::softmax_cross_entropy(logits, batch.targets);
    rec.loss = loss.value()[0];
    if (!std::isfinite(rec.loss)) {
      throw NonFiniteError("non-finite loss at step " + std::to_string(k));
    }
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);
    rec.grad_norm = clip_grad_norm(params, cfg_.clip_norm);
    rec.lr = lr_at(k - 1, optimizer_.config());
    optimizer_.step(rec.lr);
  } catch (const NonFiniteError&) {
    if (!diagnostic_path_.empty()) save_checkpoint(diagnostic_path_, checkpoint());
    throw;
  }
  step_ = k;
  rec.step = k;
  rec.lambda = lambda;
  rec.phase = mode;
  rec.tokens = k * batch.batch * batch.seq;
  return rec;
}

void Trainer::run(const std::function<void(const MetricsRecord&)>& on_record) {
  while (!done()) {
    const auto rec = step();
    if (on_record) on_record(rec);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_.model;
  c.mode = model_.mode();
  c.lambda = model_.lambda();
  c.transitioned = transitioned_;
  c.plan = plan_;
  c.plan_hash = plan_.hash();
  for (const auto* p : model_.parameters()) c.tensors.emplace_back(p->name, p->value);
  c.optimizer = optimizer_.state();
  std::ostringstream rng;
  rng << rng_;
  c.rng_state = rng.str();
  c.global_step = step_;
  return c;
}

bool Trainer::prefix_compatible(const Checkpoint& ckpt) const {
  const RunPlan& other = ckpt.plan;
  if (other.seed != plan_.seed || other.total_steps != plan_.total_steps) return false;
  for (std::uint64_t k = 1; k <= ckpt.global_step; ++k) {
    if (other.mode_at(k) != plan_.mode_at(k) || other.lambda_at(k) != plan_.lambda_at(k)) return false;
  }
  const bool mine = plan_.transition_step() != 0 && plan_.transition_step() <= ckpt.global_step;
  const bool theirs = other.transition_step() != 0 && other.transition_step() <= ckpt.global_step;
  if (mine != theirs) return false;
  return !mine || other.retain_optimizer == plan_.retain_optimizer;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (!(ckpt.config == cfg_.model)) throw CompatibilityError("restore: model config differs");
  if (ckpt.global_step > plan_.total_steps) throw CompatibilityError("restore: checkpoint is past the end of this plan");
  if (ckpt.plan_hash != plan_.hash() && !prefix_compatible(ckpt)) {
    throw CompatibilityError("restore: checkpoint plan diverges from this plan before step " +
                             std::to_string(ckpt.global_step));
  }
  // Without optimizer state the only way forward is a cold transition that
  // happens on the very next step.
  const bool cold_next = plan_.regime == Regime::cpt && !plan_.retain_optimizer &&
                         !ckpt.transitioned && ckpt.global_step + 1 == plan_.transition_step();
  if (!ckpt.optimizer && !cold_next) {
    throw CompatibilityError("restore: checkpoint has no optimizer state and this plan needs one");
  }
  if (ckpt.optimizer && !(ckpt.optimizer->hp == optimizer_.config())) {
    throw CompatibilityError("restore: optimizer hyperparameters differ");
  }
  auto params = model_.parameters();
  if (params.size() != ckpt.tensors.size()) throw CompatibilityError("restore: tensor count differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (name != params[i]->name || t.shape() != params[i]->value.shape()) {
      throw CompatibilityError("restore: tensor '" + name + "' does not match '" + params[i]->name + "'");
    }
  }
  if (ckpt.optimizer) {
    optimizer_.load_state(*ckpt.optimizer);
  } else {
    optimizer_.reset();
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ckpt.tensors[i].second;
  std::istringstream rng(ckpt.rng_state);
  rng >> rng_;
  if (!rng) throw FormatError("restore: bad RNG state");
  step_ = ckpt.global_step;
  transitioned_ = ckpt.transitioned;
  model_.set_mode(plan_.mode_at(step_), plan_.lambda_at(step_));
}

}  // namespace tqat
