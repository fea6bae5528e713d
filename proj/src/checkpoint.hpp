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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"

namespace d2s {

struct AdamState {
  std::vector<nk::Tensor<float>> m;  // ModelParams::for_each order
  std::vector<nk::Tensor<float>> v;
  std::uint64_t step = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(const ModelParams<float>& params, double lr = 0.001);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Everything needed to resume training or to generate without any other
/// file: hyperparameters, vocabulary, weights and optimizer moments.
struct Checkpoint {
  Hyperparams hp;
  Vocab vocab;
  ModelParams<float> params;
  std::optional<AdamState> adam;
  std::uint64_t iteration = 0;
  double val_bleu4 = -1.0;  // negative when never evaluated
};

inline constexpr char kCheckpointMagic[4] = {'D', '2', 'S', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary layout:
///   "D2S1" | u32 version
///   hyperparams: u64 vocab, embed, hidden, encoder_layers, decoder_layers,
///                max_decode_len, beam_width | f64 dropout, length_alpha
///   u64 iteration | f64 val_bleu4
///   vocab: u64 n, then n x (u32 byte length, bytes, u64 count)
///   adam: u8 present [u64 step | f64 lr, beta1, beta2, eps]
///   directory: u32 n, then n x (u32 name length, name, u32 rank,
///              rank x u64 dim, u64 offset in floats)
///   u64 payload floats | f32 payload
/// Adam moments are stored as tensors named "adam.m/<param>" and "adam.v/<param>".
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace d2s
