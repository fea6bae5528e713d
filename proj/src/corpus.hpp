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
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace d2s {

using TokenId = std::int32_t;

/// One document: an ordered list of standalone captions and the story
/// written for the whole sequence.
struct Example {
  std::string id;
  std::vector<std::string> descriptions;
  std::string story;
};

/// Lowercases, splits the punctuation marks .,!?;:'"()- into their own
/// tokens and drops whitespace. Bytes outside ASCII pass through untouched.
std::vector<std::string> tokenize(std::string_view text);

/// Inverse of tokenize for display: single spaces, except no space before
/// closing punctuation and none around apostrophes and hyphens.
std::string detokenize(std::span<const std::string> tokens);

bool is_punctuation_token(std::string_view token);

/// Joint source/target vocabulary. Ids 0..5 are reserved.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kDescDelim = 4;
  static constexpr TokenId kSeqEnd = 5;
  static constexpr std::size_t kNumReserved = 6;

  Vocab();

  /// Appends a non-reserved token; duplicate tokens are rejected.
  TokenId add(const std::string& token, std::uint64_t count);

  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::uint64_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  static bool is_reserved(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumReserved); }

  /// `token<TAB>count` lines for the non-reserved tokens in id order.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

Vocab build_vocab(std::span<const Example> examples, std::uint64_t min_count = 2,
                  std::size_t max_size = 30000);

struct EncodedPair {
  std::vector<TokenId> source_ids;
  std::vector<TokenId> target_ids;
  std::size_t source_length() const { return source_ids.size(); }
  std::size_t target_length() const { return target_ids.size(); }
};

/// desc1 <d> desc2 <d> ... <seq_end>
std::vector<TokenId> encode_source(std::span<const std::string> descriptions, const Vocab& vocab);

/// source as in encode_source, target = <s> story </s>.
EncodedPair encode_example(const Example& ex, const Vocab& vocab);

/// Token ids laid out row-major as rows x cols; mask is 1 on non-PAD cells.
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;

  TokenId at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  bool valid(std::size_t r, std::size_t c) const { return mask[r * cols + c] != 0; }
};

struct Batch {
  IdMatrix source;
  IdMatrix target;
  std::vector<std::size_t> indices;  // positions of the rows in the input list
  std::size_t size() const { return source.rows; }
};

/// Pads a group of pairs (in the given order) into one batch.
Batch make_batch(std::span<const EncodedPair> pairs);
Batch make_batch(std::span<const EncodedPair> pairs, std::span<const std::size_t> order);

/// Deterministic shuffle by seed, then consecutive groups of batch_size.
std::vector<Batch> make_batches(std::span<const EncodedPair> pairs, std::size_t batch_size,
                                std::uint64_t seed);

/// The permutation make_batches applies for a given seed.
std::vector<std::size_t> shuffle_order(std::size_t n, std::uint64_t seed);

struct CorpusStats {
  std::size_t doc_count = 0;
  double avg_sentences_caption = 0;
  double avg_sentences_story = 0;
  double avg_words_caption = 0;
  double avg_words_story = 0;
  // Story word types absent from the captions, stopwords and punctuation excluded.
  double avg_nonoverlap_words = 0;
  // Token-level share of story non-stop words never seen in the captions.
  double unseen_nonstop_fraction = 0;
};

using StopwordSet = std::set<std::string, std::less<>>;

std::size_t count_sentences(std::string_view text);
CorpusStats compute_stats(std::span<const Example> examples, const StopwordSet& stopwords);

/// The built-in English function-word list.
const StopwordSet& default_stopwords();
StopwordSet load_stopwords(const std::filesystem::path& path);

/// JSON Lines with fields id, descriptions, story.
std::vector<Example> load_corpus(const std::filesystem::path& path);
Example parse_example(std::string_view json_line);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace d2s
