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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace d2s::metrics {

using Tokens = std::vector<std::string>;

/// Corpus BLEU-4 in percent. Clipped n-gram counts are pooled over the
/// corpus before the geometric mean; the brevity penalty uses pooled lengths.
double bleu_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs, bool smoothing = false);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// ROUGE-L F1 for one pair (beta = 1).
double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref);

std::size_t levenshtein(std::span<const std::string> a, std::span<const std::string> b);

struct TerStats {
  std::size_t edits = 0;
  std::size_t shifts = 0;
  std::size_t ref_length = 0;
  double rate() const;  // percent
};

/// Translation edit rate with greedy block shifts. Shift candidates are
/// hypothesis spans (up to max_shift_size words) that occur verbatim in the
/// reference; every insertion point is tried and the shift giving the
/// largest drop in edit distance wins (smaller block, then leftmost origin,
/// then leftmost destination on ties). Shifting stops when nothing strictly
/// reduces the edit distance.
TerStats ter_stats(std::span<const std::string> hyp, std::span<const std::string> ref,
                   std::size_t max_shift_size = 10);
double ter(std::span<const std::string> hyp, std::span<const std::string> ref);

struct MeteorStats {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
  double score() const;  // fraction in [0,1]
};

/// Exact-match METEOR alignment: each token matched at most once, maximum
/// number of matches, chunk count minimized exhaustively when there are at
/// most `exhaustive_limit` matches, leftmost-greedy otherwise.
MeteorStats meteor_stats(std::span<const std::string> hyp, std::span<const std::string> ref,
                         std::size_t exhaustive_limit = 12);
double meteor(std::span<const std::string> hyp, std::span<const std::string> ref);

struct SentenceScores {
  double meteor = 0;
  double ter = 0;
  double rouge_l = 0;
};

struct MetricReport {
  double bleu4 = 0;    // percent
  double meteor = 0;   // percent, on corpus-summed statistics
  double ter = 0;      // percent, total edits over total reference words
  double rouge_l = 0;  // fraction, mean of sentence F scores
  std::vector<SentenceScores> sentences;

  std::string table(const std::string& label = "system") const;
  std::string json() const;
};

MetricReport evaluate(std::span<const Tokens> hyps, std::span<const Tokens> refs, bool smoothing = false,
                      unsigned threads = 1);

/// Line-aligned hypothesis and reference files, tokenized like the corpus.
MetricReport evaluate_files(const std::filesystem::path& hyp_file, const std::filesystem::path& ref_file,
                            bool smoothing = false, unsigned threads = 1);

}  // namespace d2s::metrics
