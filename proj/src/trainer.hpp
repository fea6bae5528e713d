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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "checkpoint.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "model.hpp"

namespace d2s {

/// Global L2 norm over all gradient tensors.
template <typename T>
double global_norm(std::span<const nk::Tensor<T>> grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (T v : g.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sq);
}

/// Rescales every gradient by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
template <typename T>
double clip_gradients(std::span<nk::Tensor<T>> grads, double max_norm) {
  if (!(max_norm > 0)) fail(Errc::kInvalidArgument, "max_norm must be > 0");
  const double norm = global_norm(std::span<const nk::Tensor<T>>(grads));
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (T& v : g.values()) v = static_cast<T>(static_cast<double>(v) * s);
  }
  return norm;
}

/// One bias-corrected Adam update of `params` in place.
template <typename T>
void adam_step(std::span<nk::Tensor<T>* const> params, std::span<const nk::Tensor<T>> grads,
               std::span<nk::Tensor<T>> m, std::span<nk::Tensor<T>> v, std::uint64_t& step, double lr,
               double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || m.size() != grads.size() || v.size() != grads.size())
    fail(Errc::kShapeMismatch, "adam_step: tensor counts differ");
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nk::Tensor<T>& p = *params[i];
    const nk::Tensor<T>& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(m[i]) || !p.same_shape(v[i]))
      fail(Errc::kShapeMismatch, "adam_step: shape mismatch at tensor " + std::to_string(i) + ": " +
                                     p.shape_string() + " vs " + g.shape_string());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = beta1 * static_cast<double>(m[i][k]) + (1.0 - beta1) * gk;
      const double vk = beta2 * static_cast<double>(v[i][k]) + (1.0 - beta2) * gk * gk;
      m[i][k] = static_cast<T>(mk);
      v[i][k] = static_cast<T>(vk);
      const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + eps);
      if (update != 0.0) p[k] = static_cast<T>(static_cast<double>(p[k]) - update);
    }
  }
}

inline void adam_step(ModelParams<float>& params, std::span<const nk::Tensor<float>> grads, AdamState& state) {
  auto ptrs = params.tensors();
  adam_step<float>(ptrs, grads, state.m, state.v, state.step, state.lr, state.beta1, state.beta2, state.eps);
}

struct TrainConfig {
  Hyperparams hp;
  std::size_t batch_size = 32;
  std::size_t max_iterations = 10000;
  std::size_t eval_every = 500;
  double clip_norm = 5.0;
  double learning_rate = 0.001;
  std::uint64_t seed = 1;
  bool deterministic = false;
  unsigned threads = 1;
  std::filesystem::path checkpoint_dir;  // best.ckpt and last.ckpt; empty disables
  std::filesystem::path log_path;        // CSV; empty disables

  void validate() const;
};

struct TrainLogRecord {
  std::size_t iteration = 0;
  double loss = 0;
  std::optional<double> val_bleu4;
};

struct BestCheckpointEvent {
  std::size_t iteration = 0;
  double val_bleu4 = 0;
};

struct TrainResult {
  Checkpoint last;
  std::optional<Checkpoint> best;
  std::vector<TrainLogRecord> log;
  std::vector<BestCheckpointEvent> best_history;
};

using TrainCallback = std::function<void(const TrainLogRecord&)>;

/// Shuffle seed for a given epoch.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

/// Greedy-decoded corpus BLEU-4 against the tokenized reference stories.
double validation_bleu(std::span<const Example> examples, const ModelParams<float>& params, const Hyperparams& hp,
                       const Vocab& vocab, unsigned threads);

/// Minibatch Adam training. hp.vocab_size is taken from the vocabulary.
TrainResult train(const TrainConfig& config, const Vocab& vocab, std::span<const Example> train_set,
                  std::span<const Example> valid_set, const TrainCallback& on_record = {});

/// Appends `iteration,loss,val_bleu4` records to a CSV file, one flushed
/// write per record.
class TrainLogWriter {
 public:
  explicit TrainLogWriter(const std::filesystem::path& path);
  void append(const TrainLogRecord& rec);
  static std::string format(const TrainLogRecord& rec);

 private:
  std::filesystem::path path_;
};

std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& path);

}  // namespace d2s
