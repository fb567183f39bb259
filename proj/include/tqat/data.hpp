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

// Byte-level training data: corpus loading and splitting, a deterministic
// synthetic corpus for environments without a text dump, and a batch
// stream whose t-th batch is a pure function of (corpus, shape, seed, t).

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tqat/tensor.hpp"

namespace tqat::data {

using Bytes = std::vector<std::uint8_t>;

Bytes load_corpus(const std::filesystem::path& path);

// English-like text from a fixed pseudo-word lexicon: Zipfian word choice,
// a handful of sentence templates, and a share of repeated sentences and
// chanted fragments so that copying from context is learnable. Output is
// exactly n_bytes long and depends only on (n_bytes, seed).
Bytes generate_corpus(std::size_t n_bytes, std::uint64_t seed);

struct CorpusSplit {
  std::shared_ptr<const Bytes> train;
  std::shared_ptr<const Bytes> held_out;
};

// The last held_out_fraction of the bytes becomes the held-out split; the
// two ranges are disjoint.
CorpusSplit split_corpus(const Bytes& corpus, double held_out_fraction = 0.1);

struct Batch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<Token> inputs;   // [batch x seq]
  std::vector<Token> targets;  // inputs shifted left by one
};

// Counter-based hash of (seed, t, row), splitmix64 finaliser.
std::uint64_t batch_hash(std::uint64_t seed, std::uint64_t t, std::uint64_t row);

class BatchStream {
 public:
  BatchStream(std::shared_ptr<const Bytes> corpus, std::size_t seq, std::size_t batch,
              std::uint64_t seed);

  // Row b of batch t starts at a uniformly drawn offset in
  // [0, len - seq - 1].
  Batch batch(std::uint64_t t) const;
  std::size_t offset(std::uint64_t t, std::size_t row) const;

  std::size_t seq() const noexcept { return seq_; }
  std::size_t batch_size() const noexcept { return batch_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Bytes& corpus() const noexcept { return *corpus_; }

 private:
  std::shared_ptr<const Bytes> corpus_;
  std::size_t seq_;
  std::size_t batch_;
  std::uint64_t seed_;
};

}  // namespace tqat::data
