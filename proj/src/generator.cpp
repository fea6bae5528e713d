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

#include "generator.hpp"

#include <exception>
#include <thread>

namespace d2s {

namespace {

template <typename T>
std::vector<double> log_softmax_allowed(std::span<const T> logits, bool suppress_unk) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> out(logits.size(), kNegInf);
  auto allowed = [&](std::size_t id) {
    auto t = static_cast<TokenId>(id);
    if (t == Vocab::kPad || t == Vocab::kBos || t == Vocab::kDescDelim || t == Vocab::kSeqEnd) return false;
    return !(suppress_unk && t == Vocab::kUnk);
  };
  double mx = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) mx = std::max(mx, static_cast<double>(logits[i]));
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) total += std::exp(static_cast<double>(logits[i]) - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

}  // namespace

std::vector<double> emission_log_probs(std::span<const double> logits, bool suppress_unk) {
  return log_softmax_allowed(logits, suppress_unk);
}

std::vector<double> emission_log_probs(std::span<const float> logits, bool suppress_unk) {
  return log_softmax_allowed(logits, suppress_unk);
}

std::vector<TokenId> strip_eos(std::vector<TokenId> tokens) {
  if (!tokens.empty() && tokens.back() == Vocab::kEos) tokens.pop_back();
  return tokens;
}

std::vector<std::string> generate_stories(std::span<const Example> examples, const ModelParams<float>& params,
                                          const Hyperparams& hp, const Vocab& vocab, const GenerateOptions& opt) {
  if (opt.beam_width < 1) fail(Errc::kInvalidArgument, "beam width must be >= 1");
  std::vector<std::string> out(examples.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto pair_src = encode_source(examples[i].descriptions, vocab);
      auto ids = opt.beam_width == 1 ? greedy_decode(std::span<const TokenId>(pair_src), params, hp, opt.suppress_unk)
                                     : beam_decode(std::span<const TokenId>(pair_src), params, hp, opt.beam_width,
                                                   opt.suppress_unk);
      std::vector<std::string> words;
      for (auto id : ids) words.push_back(vocab.token(id));
      out[i] = detokenize(words);
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<std::size_t>(examples.size(), 1))));
  if (threads == 1) {
    work(0, examples.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t n = examples.size();
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(n * t / threads, n * (t + 1) / threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace d2s
