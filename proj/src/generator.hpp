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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"

namespace d2s {

struct DecodeOptions {
  std::size_t max_len = 100;
  double length_alpha = 0.7;
  bool suppress_unk = false;
};

/// A partial or complete output. Tokens exclude BOS and include the final
/// EOS when the hypothesis ended on it.
template <typename State>
struct Hypothesis {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
  State state{};
  bool finished = false;

  double normalized(double alpha) const {
    return log_prob / std::pow(static_cast<double>(std::max<std::size_t>(tokens.size(), 1)), alpha);
  }
};

/// Log-softmax over the tokens a story may contain. PAD, BOS and the two
/// source delimiters get -inf (and UNK too when suppressed).
std::vector<double> emission_log_probs(std::span<const double> logits, bool suppress_unk);
std::vector<double> emission_log_probs(std::span<const float> logits, bool suppress_unk);

/// Strips a trailing EOS.
std::vector<TokenId> strip_eos(std::vector<TokenId> tokens);

/// A Scorer provides `State initial() const` and
/// `std::vector<double> log_probs(const State&, TokenId prev, State& next) const`
/// returning emission log-probabilities over the whole vocabulary.
template <typename Scorer>
std::vector<TokenId> greedy_search(const Scorer& scorer, const DecodeOptions& opt) {
  using State = typename Scorer::State;
  std::vector<TokenId> out;
  State state = scorer.initial();
  TokenId prev = Vocab::kBos;
  for (std::size_t step = 0; step < opt.max_len; ++step) {
    State next;
    auto lp = scorer.log_probs(state, prev, next);
    // Ties go to the lowest id.
    auto tok = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (tok == Vocab::kEos) break;
    out.push_back(tok);
    prev = tok;
    state = std::move(next);
  }
  return out;
}

template <typename State>
struct BeamResult {
  Hypothesis<State> best;
  std::vector<Hypothesis<State>> completed;
};

/// Keeps the `width` best live hypotheses per step. Among the top `width`
/// extensions overall, those ending in EOS move to the completed pool; the
/// live set is refilled with the best non-EOS extensions. At max_len the
/// top `width` extensions are all completed as they are. Search ends once `width`
/// hypotheses are complete or no live ones remain. The winner maximizes
/// log_prob / length^alpha; ties go to the lexicographically smallest ids.
template <typename Scorer>
BeamResult<typename Scorer::State> beam_search(const Scorer& scorer, std::size_t width, const DecodeOptions& opt) {
  using State = typename Scorer::State;
  using Hyp = Hypothesis<State>;
  if (width < 1) fail(Errc::kInvalidArgument, "beam width must be >= 1");

  struct Candidate {
    std::size_t parent;
    TokenId token;
    double log_prob;
  };
  auto better = [](const Candidate& a, const Candidate& b, const std::vector<Hyp>& live) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    const auto& ta = live[a.parent].tokens;
    const auto& tb = live[b.parent].tokens;
    if (ta != tb) return ta < tb;
    return a.token < b.token;
  };

  BeamResult<State> result;
  std::vector<Hyp> live(1);
  live[0].state = scorer.initial();
  std::vector<State> next_states;
  for (std::size_t step = 0; step < opt.max_len && !live.empty() && result.completed.size() < width; ++step) {
    std::vector<Candidate> cands;
    next_states.assign(live.size(), State{});
    for (std::size_t h = 0; h < live.size(); ++h) {
      TokenId prev = live[h].tokens.empty() ? Vocab::kBos : live[h].tokens.back();
      auto lp = scorer.log_probs(live[h].state, prev, next_states[h]);
      for (std::size_t w = 0; w < lp.size(); ++w)
        if (lp[w] != -std::numeric_limits<double>::infinity())
          cands.push_back({h, static_cast<TokenId>(w), live[h].log_prob + lp[w]});
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) { return better(a, b, live); });

    const bool last = step + 1 == opt.max_len;
    std::vector<Hyp> next_live;
    std::size_t extended = 0;  // non-EOS extensions kept this step
    for (std::size_t k = 0; k < cands.size(); ++k) {
      const Candidate& c = cands[k];
      const bool eos = c.token == Vocab::kEos;
      if ((eos || last) && k >= width) continue;
      if (!eos && extended >= width) continue;
      Hyp hyp;
      hyp.tokens = live[c.parent].tokens;
      hyp.tokens.push_back(c.token);
      hyp.log_prob = c.log_prob;
      if (!eos) ++extended;
      if (eos || last) {
        hyp.finished = true;
        result.completed.push_back(std::move(hyp));
      } else {
        hyp.state = next_states[c.parent];
        next_live.push_back(std::move(hyp));
      }
      if (k + 1 >= width && (last || extended >= width)) break;
    }
    live = std::move(next_live);
  }
  if (result.completed.empty() && opt.max_len == 0) {
    live.front().finished = true;
    result.completed.push_back(std::move(live.front()));
  }
  if (result.completed.empty()) fail(Errc::kInvalidArgument, "beam search produced no hypothesis");
  const Hyp* best = &result.completed.front();
  for (const auto& h : result.completed) {
    double a = h.normalized(opt.length_alpha), b = best->normalized(opt.length_alpha);
    if (a > b || (a == b && h.tokens < best->tokens)) best = &h;
  }
  result.best = *best;
  return result;
}

/// Adapts a trained model to the Scorer interface.
template <typename T>
class ModelScorer {
 public:
  using State = typename DecoderSession<T>::State;

  ModelScorer(const ModelParams<T>& params, const Hyperparams& hp, std::span<const TokenId> source,
              bool suppress_unk = false)
      : session_(params, hp, source), suppress_unk_(suppress_unk) {}

  State initial() const { return session_.initial(); }
  std::vector<double> log_probs(const State& state, TokenId prev, State& next) const {
    auto logits = session_.step(state, prev, next);
    return emission_log_probs(std::span<const T>(logits), suppress_unk_);
  }

 private:
  DecoderSession<T> session_;
  bool suppress_unk_;
};

/// Decoded story ids without BOS/EOS.
template <typename T>
std::vector<TokenId> greedy_decode(std::span<const TokenId> source, const ModelParams<T>& params,
                                   const Hyperparams& hp, bool suppress_unk = false) {
  ModelScorer<T> scorer(params, hp, source, suppress_unk);
  return greedy_search(scorer, DecodeOptions{hp.max_decode_len, hp.length_alpha, suppress_unk});
}

template <typename T>
std::vector<TokenId> beam_decode(std::span<const TokenId> source, const ModelParams<T>& params,
                                 const Hyperparams& hp, std::size_t width, bool suppress_unk = false) {
  if (width < 1) fail(Errc::kInvalidArgument, "beam width must be >= 1");
  ModelScorer<T> scorer(params, hp, source, suppress_unk);
  auto res = beam_search(scorer, width, DecodeOptions{hp.max_decode_len, hp.length_alpha, suppress_unk});
  return strip_eos(res.best.tokens);
}

struct GenerateOptions {
  std::size_t beam_width = 5;  // 1 selects greedy decoding
  bool suppress_unk = false;
  unsigned threads = 1;
};

/// One detokenized story per example, in input order.
std::vector<std::string> generate_stories(std::span<const Example> examples, const ModelParams<float>& params,
                                          const Hyperparams& hp, const Vocab& vocab, const GenerateOptions& opt);

}  // namespace d2s
