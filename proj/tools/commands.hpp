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

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tqat/trainer.hpp"

namespace tqat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Bad flags, bad config keys or values, invalid flag combinations.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key=value settings. Precedence: built-in defaults, then the config
// file, then command-line flags.
using Settings = std::map<std::string, std::string>;

struct KeySpec {
  const char* key;
  const char* default_value;
  const char* help;
};

const std::vector<KeySpec>& train_keys();
Settings default_settings();

// '#' starts a comment; blank lines are ignored. Unknown keys and lines
// without '=' throw UsageError.
Settings parse_config(const std::string& text);
Settings read_config_file(const std::filesystem::path& path);
std::string format_config(const Settings& s);

std::uint64_t get_u64(const Settings& s, const std::string& key);
double get_f64(const Settings& s, const std::string& key);
bool get_bool(const Settings& s, const std::string& key);

struct TrainSetup {
  TrainConfig train;
  RunPlan plan;
  std::filesystem::path out;
  std::filesystem::path data;  // empty: synthetic corpus
  std::uint64_t corpus_bytes = 0;
  std::uint64_t corpus_seed = 0;
  double held_out_fraction = 0.1;
  std::uint64_t checkpoint_every = 0;
  std::uint64_t eval_every = 0;
  std::uint64_t eval_tasks = 0;
};

// Validates and converts resolved settings; throws UsageError.
TrainSetup resolve_setup(const Settings& s);

// Corpus named by the settings: the --data file or the synthetic corpus.
data::Bytes load_training_corpus(const std::filesystem::path& data, std::uint64_t bytes,
                                 std::uint64_t seed);

struct TrainArgs {
  std::string config;
  std::string resume;
  std::string resume_positional;
  Settings flags;
};

struct EvalArgs {
  std::string checkpoint;
  std::string packed;
  bool random_init = false;
  std::uint64_t seed = 1;
  std::string data;
  std::uint64_t corpus_bytes = 4u << 20;
  std::uint64_t corpus_seed = 7;
  std::uint64_t batches = 8;
  std::uint64_t tasks = 200;
  std::uint64_t suite_seed = 1234;
  std::string out;
};

struct PackArgs {
  std::string checkpoint;
  std::string out;
  bool force = false;
};

struct BenchArgs {
  std::string packed;
  std::string checkpoint;
  std::uint64_t batch = 8;
  std::uint64_t seq = 64;
  std::uint64_t trials = 5;
};

struct PlotArgs {
  std::vector<std::string> metrics;
  std::uint64_t window = 64;
  std::string out = "loss";
};

struct CorpusArgs {
  std::uint64_t bytes = 4u << 20;
  std::uint64_t seed = 7;
  std::string out;
};

void add_train_options(CLI::App& app, TrainArgs& args);
void add_eval_options(CLI::App& app, EvalArgs& args);
void add_pack_options(CLI::App& app, PackArgs& args);
void add_bench_options(CLI::App& app, BenchArgs& args);
void add_plot_options(CLI::App& app, PlotArgs& args);
void add_corpus_options(CLI::App& app, CorpusArgs& args);

int cmd_train(const CLI::App& app, TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_pack(const PackArgs& args);
int cmd_bench(const BenchArgs& args);
int cmd_plot(const PlotArgs& args);
int cmd_corpus(const CorpusArgs& args);

// Plot helpers, exposed for tests.
struct Series {
  std::string label;
  std::vector<MetricsRecord> records;
};
std::string render_csv(const std::vector<Series>& series, std::size_t window);
std::string render_svg(const std::vector<Series>& series, std::size_t window);

}  // namespace tqat::cli
