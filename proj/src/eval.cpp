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

#include "tqat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string_view>

#include "tqat/error.hpp"

namespace tqat::eval {
namespace {

// log softmax(row)[target], accumulated in double.
double log_prob(const float* row, std::size_t vocab, Token target) {
  const float mx = *std::max_element(row, row + vocab);
  double z = 0.0;
  for (std::size_t j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
  return static_cast<double>(row[target]) - mx - std::log(z);
}

std::vector<Token> to_tokens(std::string_view s) {
  return {s.begin(), s.end()};
}

class TaskRng {
 public:
  explicit TaskRng(std::uint64_t seed) : engine_(seed) {}
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }
  char letter() { return static_cast<char>('a' + below(26)); }

 private:
  std::mt19937_64 engine_;
};

// Places `correct` among the distractors at a uniformly drawn slot.
McTask assemble(std::string family, std::string_view prompt, std::string correct,
                std::vector<std::string> distractors, TaskRng& rng) {
  McTask t{std::move(family), to_tokens(prompt), {}, rng.below(distractors.size() + 1)};
  std::size_t d = 0;
  for (std::size_t i = 0; i <= distractors.size(); ++i) {
    t.choices.push_back(to_tokens(i == t.correct ? correct : distractors[d++]));
  }
  return t;
}

std::string random_word(TaskRng& rng, std::size_t len) {
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += rng.letter();
  return w;
}

// "zop zop zop " -> "zop"
McTask copy_task(TaskRng& rng) {
  const std::size_t len = 2 + rng.below(3);
  const std::string unit = random_word(rng, len);
  std::string prompt;
  const std::size_t reps = 3 + rng.below(3);
  for (std::size_t i = 0; i < reps; ++i) prompt += unit + " ";
  std::vector<std::string> distractors;
  while (distractors.size() < 3) {
    std::string d = random_word(rng, len);
    if (d != unit && std::find(distractors.begin(), distractors.end(), d) == distractors.end()) {
      distractors.push_back(std::move(d));
    }
  }
  return assemble("copy", prompt, unit, std::move(distractors), rng);
}

// Seven draws over two letters; the answer is the more frequent one.
McTask majority_task(TaskRng& rng) {
  std::string letters;
  while (letters.size() < 4) {
    const char c = rng.letter();
    if (letters.find(c) == std::string::npos) letters += c;
  }
  const std::size_t n = 7;
  const std::size_t n_major = 4 + rng.below(3);
  std::string body(n, letters[1]);
  for (std::size_t i = 0; i < n_major; ++i) body[i] = letters[0];
  for (std::size_t i = n - 1; i > 0; --i) std::swap(body[i], body[rng.below(i + 1)]);
  return assemble("majority", body + " ", std::string(1, letters[0]),
                  {std::string(1, letters[1]), std::string(1, letters[2]), std::string(1, letters[3])},
                  rng);
}

// "abc>" -> "cba", distractors are other orderings of the same letters.
McTask reversal_task(TaskRng& rng) {
  std::string w;
  while (w.size() < 3) {
    const char c = rng.letter();
    if (w.find(c) == std::string::npos) w += c;
  }
  const std::string reversed(w.rbegin(), w.rend());
  std::vector<std::string> perms;
  std::string p = w;
  std::sort(p.begin(), p.end());
  do {
    if (p != reversed) perms.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  for (std::size_t i = perms.size() - 1; i > 0; --i) std::swap(perms[i], perms[rng.below(i + 1)]);
  perms.resize(3);
  return assemble("reversal", w + ">", reversed, std::move(perms), rng);
}

}  // namespace

double mean_nll(const LanguageModel& model, const data::BatchStream& stream, std::size_t n_batches,
                std::uint64_t first) {
  if (n_batches == 0) throw ContractError("mean_nll: n_batches must be at least 1");
  const std::size_t vocab = model.config().vocab_size;
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t t = first; t < first + n_batches; ++t) {
    const auto b = stream.batch(t);
    const Tensor logits = model.logits(b.inputs, b.batch, b.seq);
    for (std::size_t i = 0; i < b.targets.size(); ++i) {
      total -= log_prob(logits.ptr() + i * vocab, vocab, b.targets[i]);
    }
    count += b.targets.size();
  }
  return total / static_cast<double>(count);
}

double perplexity(const LanguageModel& model, const data::BatchStream& stream,
                  std::size_t n_batches, std::uint64_t first) {
  return std::exp(mean_nll(model, stream, n_batches, first));
}

double continuation_logprob(const LanguageModel& model, const std::vector<Token>& prompt,
                            const std::vector<Token>& choice) {
  if (prompt.empty() || choice.empty()) throw ContractError("mc scoring: empty prompt or choice");
  std::vector<Token> seq(prompt);
  seq.insert(seq.end(), choice.begin(), choice.end() - 1);
  const std::size_t vocab = model.config().vocab_size;
  const Tensor logits = model.logits(seq, 1, seq.size());
  double lp = 0.0;
  for (std::size_t i = 0; i < choice.size(); ++i) {
    lp += log_prob(logits.ptr() + (prompt.size() - 1 + i) * vocab, vocab, choice[i]);
  }
  return lp;
}

namespace {

// Log-probs of equally long choices from one batched forward pass.
std::vector<double> batched_logprobs(const LanguageModel& model, const McTask& task) {
  const std::size_t len = task.choices.front().size();
  const std::size_t seq = task.prompt.size() + len - 1;
  const std::size_t k = task.choices.size();
  std::vector<Token> tokens;
  tokens.reserve(k * seq);
  for (const auto& c : task.choices) {
    tokens.insert(tokens.end(), task.prompt.begin(), task.prompt.end());
    tokens.insert(tokens.end(), c.begin(), c.end() - 1);
  }
  const std::size_t vocab = model.config().vocab_size;
  const Tensor logits = model.logits(tokens, k, seq);
  std::vector<double> out(k, 0.0);
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t i = 0; i < len; ++i) {
      out[b] += log_prob(logits.ptr() + (b * seq + task.prompt.size() - 1 + i) * vocab, vocab,
                         task.choices[b][i]);
    }
  }
  return out;
}

}  // namespace

std::size_t mc_score(const LanguageModel& model, const McTask& task) {
  if (task.choices.empty()) throw ContractError("mc scoring: task has no choices");
  if (task.prompt.empty()) throw ContractError("mc scoring: empty prompt");
  const bool equal_len = std::all_of(task.choices.begin(), task.choices.end(), [&](const auto& c) {
    return !c.empty() && c.size() == task.choices.front().size();
  });
  std::vector<double> lp;
  if (equal_len) {
    lp = batched_logprobs(model, task);
  } else {
    for (const auto& c : task.choices) lp.push_back(continuation_logprob(model, task.prompt, c));
  }
  std::size_t best = 0;
  double best_score = -INFINITY;
  for (std::size_t i = 0; i < task.choices.size(); ++i) {
    const double score = lp[i] / static_cast<double>(task.choices[i].size());
    if (score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

std::vector<McTask> make_synthetic_suite(std::uint64_t seed, std::size_t tasks_per_family) {
  TaskRng rng(seed);
  std::vector<McTask> tasks;
  tasks.reserve(3 * tasks_per_family);
  for (std::size_t i = 0; i < tasks_per_family; ++i) tasks.push_back(copy_task(rng));
  for (std::size_t i = 0; i < tasks_per_family; ++i) tasks.push_back(majority_task(rng));
  for (std::size_t i = 0; i < tasks_per_family; ++i) tasks.push_back(reversal_task(rng));
  return tasks;
}

std::size_t longest_sequence(const std::vector<McTask>& tasks) {
  std::size_t longest = 0;
  for (const auto& t : tasks) {
    for (const auto& c : t.choices) {
      if (!c.empty()) longest = std::max(longest, t.prompt.size() + c.size() - 1);
    }
  }
  return longest;
}

SuiteReport run_suite(const LanguageModel& model, const std::vector<McTask>& tasks) {
  SuiteReport report;
  std::map<std::string, std::size_t> hits;
  std::size_t total_hits = 0;
  for (const auto& t : tasks) {
    const bool hit = mc_score(model, t) == t.correct;
    hits[t.family] += hit;
    report.count[t.family] += 1;
    total_hits += hit;
  }
  for (const auto& [family, n] : report.count) {
    report.accuracy[family] = static_cast<double>(hits[family]) / static_cast<double>(n);
  }
  report.overall = tasks.empty() ? 0.0 : static_cast<double>(total_hits) / tasks.size();
  return report;
}

}  // namespace tqat::eval
