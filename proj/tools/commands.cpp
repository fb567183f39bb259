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

#include "commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "tqat/error.hpp"
#include "tqat/eval.hpp"
#include "tqat/infer.hpp"
#include "tqat/serialize.hpp"

namespace tqat::cli {
namespace fs = std::filesystem;

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Keeps the JSONL records with step <= last_step.
void truncate_jsonl(const fs::path& path, std::uint64_t last_step) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) throw FormatError("malformed record in '" + path.string() + "'");
    if (j["step"].get<std::uint64_t>() <= last_step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::string eval_line(std::uint64_t step, const std::string& suite, const char* field, double value) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["suite"] = suite;
  j[field] = value;
  return j.dump();
}

std::vector<std::string> evaluate(const LanguageModel& model, std::uint64_t step, const data::BatchStream& held,
                                  std::size_t batches, const std::vector<eval::McTask>& suite) {
  std::vector<std::string> lines;
  lines.push_back(eval_line(step, "held_out", "perplexity", eval::perplexity(model, held, batches)));
  if (suite.empty()) return lines;
  const auto report = eval::run_suite(model, suite);
  for (const auto& [family, acc] : report.accuracy) lines.push_back(eval_line(step, family, "accuracy", acc));
  lines.push_back(eval_line(step, "overall", "accuracy", report.overall));
  return lines;
}

void require_suite_fits(const ModelConfig& cfg, const std::vector<eval::McTask>& suite, const char* hint) {
  const std::size_t need = eval::longest_sequence(suite);
  if (need > cfg.max_seq_len) {
    throw UsageError("the synthetic suite needs sequences of " + std::to_string(need) +
                     " tokens but max_seq_len is " + std::to_string(cfg.max_seq_len) + "; " + hint);
  }
}

// Held-out batches use a fixed seed so that every run is scored on the same text.
constexpr std::uint64_t kHeldOutSeed = 0;

}  // namespace

const std::vector<KeySpec>& train_keys() {
  static const std::vector<KeySpec> keys = {
      {"regime", "full16", "full16 | full158 | cpt"},
      {"steps", "2500", "total optimizer steps N"},
      {"transition_step", "", "t*: last step before full quantization (cpt only)"},
      {"phase_in_start", "", "s: last step with lambda = 0 (cpt only; defaults to t*)"},
      {"retain_optimizer", "false", "keep Adam moments across the transition"},
      {"seed", "1", "initialisation and batch-order seed"},
      {"data", "", "corpus file; empty selects the synthetic corpus"},
      {"corpus_bytes", "4194304", "size of the synthetic corpus"},
      {"corpus_seed", "7", "seed of the synthetic corpus"},
      {"held_out_fraction", "0.1", "tail fraction of the corpus held out"},
      {"out", "run", "output directory"},
      {"lr_peak", "4e-4", "peak learning rate"},
      {"lr_min", "4e-5", "final learning rate"},
      {"beta1", "0.9", "Adam beta1"},
      {"beta2", "0.95", "Adam beta2"},
      {"eps", "1e-8", "Adam epsilon"},
      {"weight_decay", "0.1", "decoupled weight decay"},
      {"warmup_fraction", "0.05", "warmup length as a fraction of steps"},
      {"clip_norm", "1.0", "global gradient-norm clip (0 disables)"},
      {"batch", "8", "sequences per batch"},
      {"seq", "64", "tokens per sequence"},
      {"vocab_size", "256", "vocabulary size"},
      {"d_model", "128", "model width"},
      {"n_layers", "2", "transformer blocks"},
      {"n_heads", "4", "attention heads"},
      {"max_seq_len", "128", "position table size"},
      {"ffn_multiplier", "4", "feed-forward width / d_model"},
      {"activation_bits", "8", "activation quantization bits"},
      {"checkpoint_every", "0", "checkpoint period in steps (0: every 10%)"},
      {"eval_every", "0", "evaluation period in steps (0: every 5%)"},
      {"eval_tasks", "32", "synthetic tasks per family at each evaluation (0 disables)"},
  };
  return keys;
}

Settings default_settings() {
  Settings s;
  for (const auto& k : train_keys()) s[k.key] = k.default_value;
  return s;
}

Settings parse_config(const std::string& text) {
  Settings known = default_settings();
  Settings out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!known.contains(key)) throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const Settings& s) {
  std::string out;
  for (const auto& k : train_keys()) {
    if (auto it = s.find(k.key); it != s.end()) out += std::string(k.key) + " = " + it->second + "\n";
  }
  return out;
}

std::uint64_t get_u64(const Settings& s, const std::string& key) {
  const auto& v = s.at(key);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw UsageError(dashed(key) + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double get_f64(const Settings& s, const std::string& key) {
  const auto& v = s.at(key);
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw UsageError(dashed(key) + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool get_bool(const Settings& s, const std::string& key) {
  const auto& v = s.at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError(dashed(key) + ": expected true or false, got '" + v + "'");
}

TrainSetup resolve_setup(const Settings& s) {
  TrainSetup t;
  auto& plan = t.plan;
  try {
    plan.regime = parse_regime(s.at("regime"));
  } catch (const ContractError& e) {
    throw UsageError(std::string("--regime: ") + e.what());
  }
  plan.total_steps = get_u64(s, "steps");
  plan.seed = get_u64(s, "seed");
  plan.retain_optimizer = get_bool(s, "retain_optimizer");
  const bool has_t = !s.at("transition_step").empty();
  const bool has_s = !s.at("phase_in_start").empty();
  if (plan.regime == Regime::cpt) {
    if (!has_t) throw UsageError("--regime cpt requires --transition-step");
    plan.t_star = get_u64(s, "transition_step");
    plan.s = has_s ? get_u64(s, "phase_in_start") : plan.t_star;
    plan.phase_in = plan.s != plan.t_star;
  } else {
    if (has_t) throw UsageError("--transition-step is only valid with --regime cpt");
    if (has_s) throw UsageError("--phase-in-start is only valid with --regime cpt");
    if (plan.retain_optimizer) throw UsageError("--retain-optimizer is only valid with --regime cpt");
  }
  try {
    plan.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }

  auto& m = t.train.model;
  auto u32 = [&](const char* key) {
    const auto v = get_u64(s, key);
    if (v > 0xffffffffu) throw UsageError(dashed(key) + ": value too large");
    return static_cast<std::uint32_t>(v);
  };
  m.vocab_size = u32("vocab_size");
  m.d_model = u32("d_model");
  m.n_layers = u32("n_layers");
  m.n_heads = u32("n_heads");
  m.max_seq_len = u32("max_seq_len");
  m.ffn_multiplier = u32("ffn_multiplier");
  t.train.quant.activation_bits = static_cast<int>(u32("activation_bits"));
  auto& o = t.train.optim;
  o.lr_peak = get_f64(s, "lr_peak");
  o.lr_min = get_f64(s, "lr_min");
  o.beta1 = get_f64(s, "beta1");
  o.beta2 = get_f64(s, "beta2");
  o.eps = get_f64(s, "eps");
  o.weight_decay = get_f64(s, "weight_decay");
  t.train.warmup_fraction = get_f64(s, "warmup_fraction");
  t.train.clip_norm = get_f64(s, "clip_norm");
  t.train.batch = get_u64(s, "batch");
  t.train.seq = get_u64(s, "seq");
  try {
    m.validate();
    t.train.quant.validate();
    t.train.optimizer_config(plan).validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (!(t.train.warmup_fraction >= 0.0 && t.train.warmup_fraction <= 1.0)) {
    throw UsageError("--warmup-fraction must lie in [0, 1]");
  }
  if (t.train.batch == 0 || t.train.seq == 0) throw UsageError("--batch and --seq must be positive");
  if (t.train.seq > m.max_seq_len) throw UsageError("--seq exceeds --max-seq-len");
  if (m.vocab_size < 256) throw UsageError("--vocab-size must cover all 256 byte values");

  t.out = s.at("out");
  t.data = s.at("data");
  t.corpus_bytes = get_u64(s, "corpus_bytes");
  t.corpus_seed = get_u64(s, "corpus_seed");
  t.held_out_fraction = get_f64(s, "held_out_fraction");
  if (!(t.held_out_fraction > 0.0 && t.held_out_fraction < 1.0)) {
    throw UsageError("--held-out-fraction must lie in (0, 1)");
  }
  t.checkpoint_every = get_u64(s, "checkpoint_every");
  if (t.checkpoint_every == 0) t.checkpoint_every = std::max<std::uint64_t>(1, plan.total_steps / 10);
  t.eval_every = get_u64(s, "eval_every");
  if (t.eval_every == 0) t.eval_every = std::max<std::uint64_t>(1, plan.total_steps / 20);
  t.eval_tasks = get_u64(s, "eval_tasks");
  return t;
}

data::Bytes load_training_corpus(const fs::path& data, std::uint64_t bytes, std::uint64_t seed) {
  if (!data.empty()) return data::load_corpus(data);
  return data::generate_corpus(static_cast<std::size_t>(bytes), seed);
}

void add_train_options(CLI::App& app, TrainArgs& args) {
  app.add_option("--config", args.config, "key = value config file");
  app.add_option("--resume", args.resume, "Checkpoint to resume from");
  for (const auto& k : train_keys()) {
    args.flags[k.key];
    std::string help = k.help;
    if (*k.default_value) help += " [" + std::string(k.default_value) + "]";
    app.add_option(dashed(k.key), args.flags[k.key], help);
  }
}

int cmd_train(const CLI::App& app, TrainArgs& args) {
  Settings settings = default_settings();
  if (!args.config.empty()) {
    for (auto& [k, v] : read_config_file(args.config)) settings[k] = v;
  }
  for (const auto& k : train_keys()) {
    if (app.count(dashed(k.key)) > 0) settings[k.key] = args.flags[k.key];
  }
  std::string resume = args.resume;
  if (!args.resume_positional.empty()) {
    if (!resume.empty() && resume != args.resume_positional) {
      throw UsageError("conflicting checkpoints given to continue");
    }
    resume = args.resume_positional;
  }
  const TrainSetup setup = resolve_setup(settings);

  const auto corpus = load_training_corpus(setup.data, setup.corpus_bytes, setup.corpus_seed);
  const auto split = data::split_corpus(corpus, setup.held_out_fraction);
  data::BatchStream stream(split.train, setup.train.seq, setup.train.batch, setup.plan.seed);
  data::BatchStream held(split.held_out, setup.train.seq, setup.train.batch, kHeldOutSeed);
  const auto suite = eval::make_synthetic_suite(1234, setup.eval_tasks);
  require_suite_fits(setup.train.model, suite, "raise --max-seq-len or pass --eval-tasks 0");

  Trainer trainer(setup.train, setup.plan, stream);
  fs::create_directories(setup.out);
  trainer.set_diagnostic_path(setup.out / "diagnostic.tqat");
  const fs::path metrics_path = setup.out / "metrics.jsonl";
  const fs::path eval_path = setup.out / "eval.jsonl";

  if (!resume.empty()) {
    trainer.restore(load_checkpoint(resume, setup.train.model));
    truncate_jsonl(metrics_path, trainer.global_step());
    truncate_jsonl(eval_path, trainer.global_step());
    std::cout << "resumed from " << resume << " at step " << trainer.global_step() << "\n";
  } else {
    std::ofstream(metrics_path, std::ios::trunc);
    std::ofstream(eval_path, std::ios::trunc);
  }
  {
    std::ofstream cfg(setup.out / "config.cfg", std::ios::trunc);
    cfg << format_config(settings);
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  std::ofstream evals(eval_path, std::ios::app);
  const std::uint64_t n = setup.plan.total_steps;
  const std::uint64_t report_every = std::max<std::uint64_t>(1, n / 10);
  while (!trainer.done()) {
    const MetricsRecord rec = trainer.step();
    metrics << to_json_line(rec) << '\n';
    if (setup.eval_tasks > 0 && (rec.step % setup.eval_every == 0 || rec.step == n)) {
      for (const auto& l : evaluate(trainer.model(), rec.step, held, 4, suite)) evals << l << '\n';
    }
    if (rec.step % setup.checkpoint_every == 0 && rec.step != n) {
      metrics.flush();
      evals.flush();
      std::ostringstream name;
      name << "ckpt-" << std::setw(7) << std::setfill('0') << rec.step << ".tqat";
      save_checkpoint(setup.out / name.str(), trainer.checkpoint());
    }
    if (rec.step % report_every == 0 || rec.step == n) {
      std::cout << "step " << rec.step << "/" << n << " loss " << rec.loss << " lr " << rec.lr << " lambda "
                << rec.lambda << " phase " << to_string(rec.phase) << std::endl;
    }
  }
  metrics.flush();
  evals.flush();
  save_checkpoint(setup.out / "final.tqat", trainer.checkpoint());
  std::cout << "wrote " << (setup.out / "final.tqat").string() << "\n";
  return kExitOk;
}

void add_eval_options(CLI::App& app, EvalArgs& args) {
  auto* ck = app.add_option("--checkpoint,--ckpt", args.checkpoint, "Training checkpoint");
  auto* pk = app.add_option("--packed", args.packed, "Packed model file");
  auto* ri = app.add_flag("--random-init", args.random_init, "Evaluate a freshly initialised default model");
  ck->excludes(pk)->excludes(ri);
  pk->excludes(ri);
  app.add_option("--seed", args.seed, "Initialisation seed for --random-init");
  app.add_option("--data", args.data, "Corpus file for perplexity (default: synthetic corpus)");
  app.add_option("--corpus-bytes", args.corpus_bytes, "Synthetic corpus size");
  app.add_option("--corpus-seed", args.corpus_seed, "Synthetic corpus seed");
  app.add_option("--batches", args.batches, "Held-out batches for perplexity");
  app.add_option("--tasks", args.tasks, "Synthetic tasks per family");
  app.add_option("--suite-seed", args.suite_seed, "Synthetic suite seed");
  app.add_option("--out", args.out, "Write the report as JSON lines");
}

int cmd_eval(const EvalArgs& args) {
  if (args.checkpoint.empty() && args.packed.empty() && !args.random_init) {
    throw UsageError("eval needs --checkpoint, --packed or --random-init");
  }
  if (args.batches == 0) throw UsageError("--batches must be at least 1");
  std::unique_ptr<LanguageModel> model;
  std::uint64_t step = 0;
  if (!args.checkpoint.empty()) {
    const auto ckpt = load_checkpoint(args.checkpoint);
    step = ckpt.global_step;
    model = std::make_unique<TransformerModel<float>>(model_from_checkpoint(ckpt));
  } else if (!args.packed.empty()) {
    model = std::make_unique<PackedModel>(PackedModel::load(args.packed));
  } else {
    auto m = std::make_unique<TransformerModel<float>>(ModelConfig{});
    std::mt19937_64 rng(args.seed);
    m->init(rng);
    model = std::move(m);
  }
  const auto corpus = load_training_corpus(args.data, args.corpus_bytes, args.corpus_seed);
  const auto split = data::split_corpus(corpus);
  const std::size_t seq = std::min<std::size_t>(64, model->config().max_seq_len);
  data::BatchStream held(split.held_out, seq, 8, kHeldOutSeed);
  const auto suite = eval::make_synthetic_suite(args.suite_seed, args.tasks);
  require_suite_fits(model->config(), suite, "pass --tasks 0 to skip the suite");
  const auto lines = evaluate(*model, step, held, args.batches, suite);
  for (const auto& l : lines) std::cout << l << "\n";
  if (!args.out.empty()) {
    std::ofstream out(args.out, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw std::runtime_error("cannot write '" + args.out + "'");
  }
  return kExitOk;
}

void add_pack_options(CLI::App& app, PackArgs& args) {
  app.add_option("--checkpoint,--ckpt", args.checkpoint, "Training checkpoint")->required();
  app.add_option("--out", args.out, "Packed model output path")->required();
  app.add_flag("--force", args.force, "Quantize a checkpoint that was not trained in quantized mode");
}

int cmd_pack(const PackArgs& args) {
  const auto ckpt = load_checkpoint(args.checkpoint);
  PackedModel pm;
  try {
    pm = PackedModel::from_checkpoint(ckpt, args.force);
  } catch (const ContractError& e) {
    throw UsageError(std::string(e.what()) + " (pass --force)");
  }
  pm.save(args.out);
  std::cout << "packed " << pm.layers().size() << " linear layers: " << pm.linear_bytes_packed() << " bytes (f32: "
            << pm.linear_bytes_float() << " bytes)\n";
  return kExitOk;
}

void add_bench_options(CLI::App& app, BenchArgs& args) {
  app.add_option("--packed", args.packed, "Packed model file")->required();
  app.add_option("--checkpoint,--ckpt", args.checkpoint, "Training checkpoint of the same model")->required();
  app.add_option("--batch", args.batch, "Sequences per forward pass");
  app.add_option("--seq", args.seq, "Tokens per sequence");
  app.add_option("--trials", args.trials, "Timed trials (at least 5)");
}

int cmd_bench(const BenchArgs& args) {
  const auto packed = PackedModel::load(args.packed);
  const auto ckpt = load_checkpoint(args.checkpoint, packed.config());
  const auto reference = model_from_checkpoint(ckpt);
  if (args.batch == 0 || args.seq == 0 || args.seq > packed.config().max_seq_len) {
    throw UsageError("--batch/--seq out of range");
  }
  const auto r = bench(packed, reference, args.batch, args.seq, args.trials);
  std::cout << std::left << std::setw(28) << "metric" << std::setw(16) << "packed" << "float\n";
  std::cout << std::setw(28) << "linear weight bytes" << std::setw(16) << r.bytes_packed << r.bytes_float << "\n";
  std::cout << std::setw(28) << "tokens/s (median)" << std::setw(16) << std::fixed << std::setprecision(1)
            << r.tokens_per_s_packed << r.tokens_per_s_float << "\n";
  std::cout << std::setw(28) << "memory ratio" << std::setprecision(5)
            << static_cast<double>(r.bytes_packed) / static_cast<double>(r.bytes_float) << "\n";
  std::cout << std::setw(28) << "trials" << r.trials << "\n";
  return kExitOk;
}

void add_plot_options(CLI::App& app, PlotArgs& args) {
  app.add_option("metrics", args.metrics, "Metrics files (JSON lines)")->required();
  app.add_option("--window", args.window, "Smoothing window");
  app.add_option("--out", args.out, "Output prefix; writes <prefix>.svg and <prefix>.csv");
}

std::string render_csv(const std::vector<Series>& series, std::size_t window) {
  std::set<std::uint64_t> steps;
  std::vector<std::map<std::uint64_t, std::pair<double, double>>> cols;
  for (const auto& s : series) {
    std::vector<double> raw;
    for (const auto& r : s.records) raw.push_back(r.loss);
    const auto sm = smooth(raw, window);
    auto& col = cols.emplace_back();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      steps.insert(s.records[i].step);
      col[s.records[i].step] = {raw[i], sm[i]};
    }
  }
  std::string out = "step";
  for (const auto& s : series) out += "," + s.label + "_loss," + s.label + "_smoothed";
  out += "\n";
  for (auto step : steps) {
    out += std::to_string(step);
    for (const auto& col : cols) {
      if (auto it = col.find(step); it != col.end()) {
        out += "," + shortest(it->second.first) + "," + shortest(it->second.second);
      } else {
        out += ",,";
      }
    }
    out += "\n";
  }
  return out;
}

std::string render_svg(const std::vector<Series>& series, std::size_t window) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  constexpr double kW = 900, kH = 540, kLeft = 70, kRight = 200, kTop = 30, kBottom = 60;
  std::vector<std::vector<double>> smoothed;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    std::vector<double> raw;
    for (const auto& r : s.records) raw.push_back(r.loss);
    smoothed.push_back(smooth(raw, window));
    for (std::size_t i = 0; i < raw.size(); ++i) {
      x0 = std::min(x0, static_cast<double>(s.records[i].step));
      x1 = std::max(x1, static_cast<double>(s.records[i].step));
      y0 = std::min(y0, smoothed.back()[i]);
      y1 = std::max(y1, smoothed.back()[i]);
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << " " << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    o << "<line x1=\"" << px(xv) << "\" y1=\"" << kTop + ph << "\" x2=\"" << px(xv) << "\" y2=\"" << kTop + ph + 5
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
      << static_cast<long long>(std::llround(xv)) << "</text>\n";
    o << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << kLeft << "\" y2=\"" << py(yv)
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3)
      << yv << std::setprecision(2) << "</text>\n";
  }
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">step</text>\n";
  o << "<text x=\"18\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << kTop + ph / 2 << ")\">loss (EMA window " << window << ")</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % std::size(kColors)];
    // Markers where lambda starts rising and where quantization becomes full.
    for (std::size_t i = 1; i < s.records.size(); ++i) {
      const auto prev = s.records[i - 1].phase, cur = s.records[i].phase;
      if (prev == cur) continue;
      const double x = px(static_cast<double>(s.records[i].step));
      const bool full = cur == LinearMode::quantized;
      o << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\"" << kTop + ph << "\" stroke=\""
        << color << "\" stroke-dasharray=\"" << (full ? "6,4" : "2,3") << "\"/>\n";
      o << "<text x=\"" << x + 3 << "\" y=\"" << kTop + 12 + 14 * si << "\" fill=\"" << color << "\">"
        << (full ? "t*" : "lambda") << "</text>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      o << px(static_cast<double>(s.records[i].step)) << "," << py(smoothed[si][i]) << " ";
    }
    o << "\"/>\n";
    const double ly = kTop + 10 + 20 * si;
    o << "<line x1=\"" << kW - kRight + 15 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 40 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kW - kRight + 45 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

int cmd_plot(const PlotArgs& args) {
  if (args.window == 0) throw UsageError("--window must be at least 1");
  std::vector<Series> series;
  std::set<std::string> labels;
  for (const auto& file : args.metrics) {
    Series s;
    const fs::path p(file);
    s.label = p.stem() == "metrics" && p.has_parent_path() ? p.parent_path().filename().string() : p.stem().string();
    for (int i = 2; labels.contains(s.label); ++i) s.label = s.label + "_" + std::to_string(i);
    s.records = read_metrics(p);
    if (s.records.empty()) {
      std::cerr << "warning: '" << file << "' has no records; skipped\n";
      continue;
    }
    labels.insert(s.label);
    series.push_back(std::move(s));
  }
  if (series.empty()) throw std::runtime_error("no non-empty metrics files to plot");
  const std::string csv = render_csv(series, args.window);
  const std::string svg = render_svg(series, args.window);
  for (const auto& [ext, body] : {std::pair{".csv", &csv}, std::pair{".svg", &svg}}) {
    std::ofstream out(args.out + ext, std::ios::trunc);
    out << *body;
    if (!out) throw std::runtime_error("cannot write '" + args.out + ext + "'");
  }
  std::cout << "wrote " << args.out << ".svg and " << args.out << ".csv\n";
  return kExitOk;
}

void add_corpus_options(CLI::App& app, CorpusArgs& args) {
  app.add_option("--bytes", args.bytes, "Corpus size in bytes");
  app.add_option("--seed", args.seed, "Generator seed");
  app.add_option("--out", args.out, "Output file")->required();
}

int cmd_corpus(const CorpusArgs& args) {
  const auto bytes = data::generate_corpus(static_cast<std::size_t>(args.bytes), args.seed);
  write_file_atomic(args.out, bytes);
  std::cout << "wrote " << bytes.size() << " bytes to " << args.out << "\n";
  return kExitOk;
}

}  // namespace tqat::cli
