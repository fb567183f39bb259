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

// Held-out perplexity and a zero-shot multiple-choice harness scored by
// length-normalised log-likelihood.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tqat/data.hpp"
#include "tqat/nn.hpp"

namespace tqat::eval {

// Mean token negative log-likelihood over batches first .. first+n_batches-1.
double mean_nll(const LanguageModel& model, const data::BatchStream& stream, std::size_t n_batches,
                std::uint64_t first = 0);

// exp(mean_nll)
double perplexity(const LanguageModel& model, const data::BatchStream& stream,
                  std::size_t n_batches, std::uint64_t first = 0);

struct McTask {
  std::string family;
  std::vector<Token> prompt;
  std::vector<std::vector<Token>> choices;
  std::size_t correct = 0;
};

// Sum of log p(choice tokens | prompt, preceding choice tokens), in nats.
double continuation_logprob(const LanguageModel& model, const std::vector<Token>& prompt,
                            const std::vector<Token>& choice);

// argmax_i logprob(choice_i) / len(choice_i); ties go to the lowest index.
std::size_t mc_score(const LanguageModel& model, const McTask& task);

inline const std::vector<std::string>& suite_families() {
  static const std::vector<std::string> families{"copy", "majority", "reversal"};
  return families;
}

// tasks_per_family tasks for each family, k = 4 choices, correct position
// uniform over the four slots. Deterministic per seed.
std::vector<McTask> make_synthetic_suite(std::uint64_t seed, std::size_t tasks_per_family = 200);

// Longest token sequence scoring any task needs: prompt plus choice minus
// the final token. A model must accept sequences this long.
std::size_t longest_sequence(const std::vector<McTask>& tasks);

struct SuiteReport {
  std::map<std::string, double> accuracy;  // per family
  std::map<std::string, std::size_t> count;
  double overall = 0.0;
};

SuiteReport run_suite(const LanguageModel& model, const std::vector<McTask>& tasks);

}  // namespace tqat::eval
