// Copyright 2026 The Desc2Story Authors.
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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace d2s::lm {

using Sentence = std::vector<std::string>;

struct KNOptions {
  std::size_t order = 5;
  double discount = 0.75;
  bool boundaries = true;  // wrap sentences in <s> ... </s>
  bool unk = true;         // reserve <unk> for out-of-vocabulary words
  friend bool operator==(const KNOptions&, const KNOptions&) = default;
};

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";

struct PerplexityResult {
  double perplexity = 0;
  double log_prob = 0;      // natural log, summed over events
  std::size_t events = 0;   // predicted tokens, EOS included
  std::size_t oov = 0;      // words mapped to <unk>
};

/// Interpolated Kneser-Ney with a single absolute discount. The highest
/// order and n-grams starting with <s> use raw counts; lower orders use
/// continuation counts; the unigram level interpolates with the uniform
/// distribution over the predictable vocabulary.
class KNModel {
 public:
  using Ngram = std::vector<std::int32_t>;

  struct Counts {
    std::uint64_t count = 0;         // raw occurrences
    std::uint64_t continuation = 0;  // distinct left extensions
    friend bool operator==(const Counts&, const Counts&) = default;
  };

  static KNModel train(std::span<const Sentence> sentences, const KNOptions& opt = {});

  /// p(word | context); only the last order-1 context tokens matter.
  double prob(std::span<const std::string> context, std::string_view word) const;
  double prob_ids(std::span<const std::int32_t> context, std::int32_t word) const;

  PerplexityResult perplexity(std::span<const Sentence> sentences) const;

  const KNOptions& options() const { return opt_; }
  /// Predictable tokens (everything but <s>), in id order starting at id 1.
  std::span<const std::string> vocab() const { return std::span(tokens_).subspan(1); }
  std::int32_t id(std::string_view token) const;  // -1 when absent
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t ngram_count(std::size_t k) const { return tables_.at(k - 1).size(); }
  const std::map<Ngram, Counts>& table(std::size_t k) const { return tables_.at(k - 1); }

  std::string serialize() const;
  static KNModel parse(std::string_view text, const std::string& origin = "<memory>");
  void save(const std::filesystem::path& path) const;
  static KNModel load(const std::filesystem::path& path);

  friend bool operator==(const KNModel& a, const KNModel& b) {
    return a.opt_ == b.opt_ && a.tokens_ == b.tokens_ && a.tables_ == b.tables_;
  }

 private:
  struct ContextStats {
    double total = 0;          // sum of adjusted counts of the extensions
    std::uint64_t types = 0;   // extensions with a positive adjusted count
  };

  void index_tokens();
  void finalize();
  std::uint64_t adjusted(std::size_t k, const Counts& c, std::int32_t first) const;
  std::vector<std::int32_t> encode(const Sentence& s, std::size_t* oov) const;

  KNOptions opt_;
  std::vector<std::string> tokens_;  // id 0 is <s>
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::map<Ngram, Counts>> tables_;         // per order
  std::vector<std::map<Ngram, ContextStats>> contexts_;  // per order, keyed by context
};

}  // namespace d2s::lm
