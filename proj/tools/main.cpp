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

// tqat command-line tool: train, continue, eval, pack, bench, plot, corpus.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace tqat::cli;
  CLI::App app{"Ternary quantization-aware training toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model under one regime");
  add_train_options(*train, train_args);

  TrainArgs continue_args;
  auto* cont = app.add_subcommand("continue", "Resume a run from a checkpoint (train --resume)");
  add_train_options(*cont, continue_args);
  cont->add_option("checkpoint", continue_args.resume_positional, "Checkpoint to resume from")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Perplexity and synthetic zero-shot suite");
  add_eval_options(*eval, eval_args);

  PackArgs pack_args;
  auto* pack = app.add_subcommand("pack", "Export a checkpoint as a packed ternary model");
  add_pack_options(*pack, pack_args);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Compare packed and float inference");
  add_bench_options(*bench, bench_args);

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Smoothed loss curves as SVG plus a CSV table");
  add_plot_options(*plot, plot_args);

  CorpusArgs corpus_args;
  auto* corpus = app.add_subcommand("corpus", "Write the synthetic training corpus");
  add_corpus_options(*corpus, corpus_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(*train, train_args);
    if (*cont) return cmd_train(*cont, continue_args);
    if (*eval) return cmd_eval(eval_args);
    if (*pack) return cmd_pack(pack_args);
    if (*bench) return cmd_bench(bench_args);
    if (*plot) return cmd_plot(plot_args);
    if (*corpus) return cmd_corpus(corpus_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
