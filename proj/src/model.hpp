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
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "tape.hpp"

namespace d2s {

/// Scalar settings of the network. Hidden size defaults to the embedding
/// size; the attention space has the hidden size.
struct Hyperparams {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 256;
  std::size_t hidden_dim = 256;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 2;
  double dropout = 0.2;  // drop rate; keep probability 0.8
  std::size_t max_decode_len = 100;
  std::size_t beam_width = 5;
  double length_alpha = 0.7;

  std::size_t attention_dim() const { return hidden_dim; }
  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

template <typename T>
struct GruParams {
  nk::Tensor<T> w_z, w_r, w_h;  // in_dim x H
  nk::Tensor<T> u_z, u_r, u_h;  // H x H
  nk::Tensor<T> b_z, b_r, b_h;  // H

  static GruParams zeros(std::size_t in_dim, std::size_t hidden);
  friend bool operator==(const GruParams&, const GruParams&) = default;
};

template <typename T>
struct ModelParams {
  nk::Tensor<T> src_embed;  // V x E
  nk::Tensor<T> tgt_embed;  // V x E
  GruParams<T> enc_fwd, enc_bwd;  // input E
  GruParams<T> dec1;              // input E + 2H
  GruParams<T> dec2;              // input H
  nk::Tensor<T> w_a;     // H x A
  nk::Tensor<T> u_a;     // 2H x A
  nk::Tensor<T> v_a;     // A x 1
  nk::Tensor<T> w_init;  // H x H
  nk::Tensor<T> b_init;  // H
  nk::Tensor<T> w_o;     // 3H x V
  nk::Tensor<T> b_o;     // V

  static ModelParams zeros(const Hyperparams& hp);

  /// Visits every tensor with a stable dotted name, in a fixed order.
  void for_each(const std::function<void(const std::string&, nk::Tensor<T>&)>& fn);
  void for_each(const std::function<void(const std::string&, const nk::Tensor<T>&)>& fn) const;
  std::vector<nk::Tensor<T>*> tensors();
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform matrices, zero biases, deterministic in seed.
ModelParams<float> init_params(const Hyperparams& hp, std::uint64_t seed);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src);

// --- Graph construction ------------------------------------------------------

struct GruNodes {
  nk::NodeId w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h;
};

struct ParamNodes {
  nk::NodeId src_embed, tgt_embed;
  GruNodes enc_fwd, enc_bwd, dec1, dec2;
  nk::NodeId w_a, u_a, v_a, w_init, b_init, w_o, b_o;

  /// Node ids in ModelParams::for_each order.
  std::vector<nk::NodeId> all() const;
};

/// Registers the parameters on the tape by reference (no copies).
template <typename T>
ParamNodes bind_params(nk::Tape<T>& tape, const ModelParams<T>& params);

/// z = s(xWz + hUz + bz); r = s(xWr + hUr + br);
/// h~ = tanh(xWh + (r.h)Uh + bh); h' = z.h + (1-z).h~
template <typename T>
nk::NodeId gru_cell(nk::Tape<T>& tape, nk::NodeId x, nk::NodeId h_prev, const GruNodes& p);

/// Single-vector form on a private tape.
template <typename T>
nk::Tensor<T> gru_cell(const nk::Tensor<T>& x, const nk::Tensor<T>& h_prev, const GruParams<T>& p);

template <typename T>
struct Encoded {
  std::size_t batch = 0;
  std::size_t steps = 0;
  nk::NodeId annotations = 0;  // steps*batch x 2H, block layout
  nk::NodeId keys = 0;         // annotations * U_a
  nk::Tensor<T> mask;          // batch x steps
  nk::NodeId init_state = 0;   // batch x H, shared by both decoder layers
};

template <typename T>
Encoded<T> encode(nk::Tape<T>& tape, const ParamNodes& p, const IdMatrix& source, const Hyperparams& hp,
                  bool training, std::mt19937_64* rng);

struct AttentionNodes {
  nk::NodeId context;  // batch x 2H
  nk::NodeId weights;  // batch x steps
};

template <typename T>
AttentionNodes attend(nk::Tape<T>& tape, const ParamNodes& p, nk::NodeId dec_state, const Encoded<T>& enc);

struct DecoderState {
  nk::NodeId layer1;
  nk::NodeId layer2;
};

struct StepNodes {
  nk::NodeId logits;  // batch x V
  DecoderState state;
  AttentionNodes attention;
};

template <typename T>
StepNodes decode_step(nk::Tape<T>& tape, const ParamNodes& p, std::span<const TokenId> y_prev,
                      DecoderState state, const Encoded<T>& enc, const Hyperparams& hp, bool training,
                      std::mt19937_64* rng);

/// Teacher-forced mean token cross-entropy over non-PAD target positions.
template <typename T>
nk::NodeId loss_graph(nk::Tape<T>& tape, const ParamNodes& p, const Batch& batch, const Hyperparams& hp,
                      bool training, std::mt19937_64* rng);

template <typename T>
T forward_loss(const Batch& batch, const ModelParams<T>& params, const Hyperparams& hp, bool training,
               std::mt19937_64* rng = nullptr);

/// Loss and the gradient of every parameter (ModelParams::for_each order).
template <typename T>
T loss_and_gradients(const Batch& batch, const ModelParams<T>& params, const Hyperparams& hp, bool training,
                     std::mt19937_64* rng, std::vector<nk::Tensor<T>>& grads);

/// Encoder output for a single source, kept as plain tensors so decoding
/// steps can run on throwaway tapes.
template <typename T>
class DecoderSession {
 public:
  struct State {
    nk::Tensor<T> layer1, layer2;
  };

  DecoderSession(const ModelParams<T>& params, const Hyperparams& hp, std::span<const TokenId> source_ids);

  const State& initial() const { return initial_; }
  std::size_t source_length() const { return steps_; }

  /// Inference-mode step; returns the vocabulary logits.
  std::vector<T> step(const State& state, TokenId y_prev, State& next, std::vector<T>* attention = nullptr) const;

 private:
  const ModelParams<T>& params_;
  Hyperparams hp_;
  std::size_t steps_ = 0;
  nk::Tensor<T> annotations_, keys_, mask_;
  State initial_;
};

extern template class DecoderSession<float>;
extern template class DecoderSession<double>;

}  // namespace d2s
