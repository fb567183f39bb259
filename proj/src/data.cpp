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

#include "tqat/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <string_view>

#include "tqat/error.hpp"

namespace tqat::data {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Unbiased value in [0, n) from a stream of 64-bit words (Lemire).
template <typename Next>
std::uint64_t bounded(Next&& next, std::uint64_t n) {
  unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = -n % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

// Portable draws on top of mt19937_64; the std distributions are
// implementation-defined and would tie the corpus to one standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t below(std::uint64_t n) { return bounded([this] { return engine_(); }, n); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }
  template <typename C>
  const auto& pick(const C& c) { return c[below(c.size())]; }

 private:
  std::mt19937_64 engine_;
};

constexpr std::array<std::string_view, 29> kOnsets = {
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t",
    "v", "w", "z", "br", "ch", "cl", "dr", "fl", "gr", "pl", "sh", "st", "th", "tr"};
constexpr std::array<std::string_view, 9> kVowels = {"a", "e", "i", "o", "u", "ai", "ea", "ou", "oo"};
constexpr std::array<std::string_view, 9> kCodas = {"", "", "n", "r", "s", "l", "m", "nd", "st"};
constexpr std::array<std::string_view, 8> kPrepositions = {"of", "to", "in", "with", "on", "near", "under", "for"};
constexpr std::array<std::string_view, 6> kAdverbs = {"slowly", "again", "today", "quietly", "often", "never"};

// Word list with Zipfian sampling weights (rank r has weight 1 / (r + 2)).
class Lexicon {
 public:
  Lexicon(Rng& rng, std::size_t size, std::size_t min_syl, std::size_t max_syl) {
    while (words_.size() < size) {
      std::string w;
      const std::size_t syl = min_syl + rng.below(max_syl - min_syl + 1);
      for (std::size_t i = 0; i < syl; ++i) {
        w += rng.pick(kOnsets);
        w += rng.pick(kVowels);
        if (i + 1 == syl || rng.chance(0.3)) w += rng.pick(kCodas);
      }
      if (std::find(words_.begin(), words_.end(), w) == words_.end()) words_.push_back(std::move(w));
    }
    double acc = 0.0;
    for (std::size_t r = 0; r < words_.size(); ++r) {
      acc += 1.0 / static_cast<double>(r + 2);
      cdf_.push_back(acc);
    }
  }

  const std::string& sample(Rng& rng) const {
    const double u = rng.unit() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return words_[std::min<std::size_t>(it - cdf_.begin(), words_.size() - 1)];
  }

 private:
  std::vector<std::string> words_;
  std::vector<double> cdf_;
};

std::string random_unit(Rng& rng) {
  std::string u;
  const std::size_t len = 2 + rng.below(3);
  for (std::size_t i = 0; i < len; ++i) u += static_cast<char>('a' + rng.below(26));
  return u;
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed)
      : rng_(seed),
        nouns_(rng_, 400, 1, 3),
        verbs_(rng_, 200, 1, 2),
        adjectives_(rng_, 150, 1, 3),
        names_(rng_, 60, 2, 3) {}

  std::string paragraph() {
    std::vector<std::string> sentences;
    const std::size_t n = 3 + rng_.below(6);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      std::string s;
      if (!sentences.empty() && rng_.chance(0.1)) {
        s = rng_.pick(sentences);
      } else if (rng_.chance(0.15)) {
        s = chant();
      } else {
        s = sentence();
        sentences.push_back(s);
      }
      if (!out.empty()) out += ' ';
      out += s;
    }
    out += "\n\n";
    return out;
  }

 private:
  std::string name() {
    std::string n = names_.sample(rng_);
    n[0] = static_cast<char>(n[0] - 'a' + 'A');
    return n;
  }
  std::string noun() { return nouns_.sample(rng_); }
  std::string adj() { return adjectives_.sample(rng_); }
  std::string verb() { return verbs_.sample(rng_) + (rng_.chance(0.6) ? "ed" : "s"); }
  std::string prep() { return std::string(rng_.pick(kPrepositions)); }

  std::string sentence() {
    std::string s;
    switch (rng_.below(6)) {
      case 0: s = "the " + adj() + " " + noun() + " " + verb() + " the " + noun() + "."; break;
      case 1: s = name() + " " + verb() + " a " + noun() + " " + prep() + " the " + noun() + "."; break;
      case 2: s = "the " + noun() + " of " + name() + " was " + adj() + " and " + adj() + "."; break;
      case 3: s = name() + " and " + name() + " " + verb() + " " + std::string(rng_.pick(kAdverbs)) + "."; break;
      case 4: s = "when the " + noun() + " " + verb() + ", " + name() + " " + verb() + " the " + adj() + " " + noun() + "."; break;
      default: s = "\"" + adj() + " " + noun() + ",\" said " + name() + "."; break;
    }
    const std::size_t first = s[0] == '"' ? 1 : 0;
    if (s[first] >= 'a' && s[first] <= 'z') s[first] = static_cast<char>(s[first] - 'a' + 'A');
    return s;
  }

  std::string chant() {
    const std::string unit = rng_.chance(0.75) ? random_unit(rng_) : noun();
    const std::size_t reps = 3 + rng_.below(4);
    std::string s;
    for (std::size_t i = 0; i < reps; ++i) s += (i ? " " : "") + unit;
    s += ".";
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
  }

  Rng rng_;
  Lexicon nouns_, verbs_, adjectives_, names_;
};

}  // namespace

Bytes load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Bytes generate_corpus(std::size_t n_bytes, std::uint64_t seed) {
  Generator gen(seed);
  Bytes out;
  out.reserve(n_bytes + 1024);
  while (out.size() < n_bytes) {
    const std::string p = gen.paragraph();
    out.insert(out.end(), p.begin(), p.end());
  }
  out.resize(n_bytes);
  return out;
}

CorpusSplit split_corpus(const Bytes& corpus, double held_out_fraction) {
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0)) {
    throw ContractError("held-out fraction must lie in (0, 1)");
  }
  const auto n_held = static_cast<std::size_t>(std::floor(corpus.size() * held_out_fraction));
  const std::size_t cut = corpus.size() - n_held;
  return {std::make_shared<const Bytes>(corpus.begin(), corpus.begin() + cut),
          std::make_shared<const Bytes>(corpus.begin() + cut, corpus.end())};
}

std::uint64_t batch_hash(std::uint64_t seed, std::uint64_t t, std::uint64_t row) {
  return splitmix64(splitmix64(splitmix64(seed) ^ t) ^ row);
}

BatchStream::BatchStream(std::shared_ptr<const Bytes> corpus, std::size_t seq, std::size_t batch,
                         std::uint64_t seed)
    : corpus_(std::move(corpus)), seq_(seq), batch_(batch), seed_(seed) {
  if (!corpus_) throw ContractError("batch stream: no corpus");
  if (seq_ == 0 || batch_ == 0) throw ContractError("batch stream: seq and batch must be positive");
  if (corpus_->size() < seq_ + 1) {
    throw ContractError("batch stream: corpus of " + std::to_string(corpus_->size()) +
                        " bytes is shorter than seq + 1 = " + std::to_string(seq_ + 1));
  }
}

std::size_t BatchStream::offset(std::uint64_t t, std::size_t row) const {
  std::uint64_t counter = 0;
  const std::uint64_t key = batch_hash(seed_, t, row);
  auto next = [&] { return splitmix64(key + counter++); };
  return static_cast<std::size_t>(bounded(next, corpus_->size() - seq_));
}

Batch BatchStream::batch(std::uint64_t t) const {
  Batch b{batch_, seq_, std::vector<Token>(batch_ * seq_), std::vector<Token>(batch_ * seq_)};
  for (std::size_t r = 0; r < batch_; ++r) {
    const std::uint8_t* src = corpus_->data() + offset(t, r);
    for (std::size_t i = 0; i < seq_; ++i) {
      b.inputs[r * seq_ + i] = src[i];
      b.targets[r * seq_ + i] = src[i + 1];
    }
  }
  return b;
}

}  // namespace tqat::data
