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
#include <random>
#include <span>
#include <vector>

#include "corpus.hpp"
#include "tensor.hpp"

namespace d2s::nk {

using NodeId = std::uint32_t;

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kAddBias,
  kSub,
  kMul,
  kOneMinus,
  kScale,
  kConcatCols,
  kSliceCols,
  kStackRows,
  kSigmoid,
  kTanh,
  kSoftmaxRows,
  kMaskedSoftmaxRows,
  kDropout,
  kEmbedLookup,
  kCrossEntropyRows,
  kMaskBlend,
  kAddTiled,
  kBlocksToCols,
  kWeightedBlockSum,
  kWeightedSum,
  kSum,
};

const char* op_name(OpKind kind);

/// Gradient of the loss with respect to every node, indexed by NodeId.
template <typename T>
using Gradients = std::vector<Tensor<T>>;

/// Records a computation as it is evaluated so it can be differentiated in
/// reverse. Node ids are assigned in creation order, so every node's inputs
/// have smaller ids. A tape is single-writer.
///
/// Layout conventions used by the sequence ops: a "block" tensor stacks k
/// time steps of a B-row batch as k*B rows, row t*B + b holding step t of
/// example b.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeId constant(Tensor<T> value);
  /// Borrows `value` without copying; it must outlive the tape.
  NodeId reference(const Tensor<T>& value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId add_bias(NodeId x, NodeId bias);  // bias broadcast over rows
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId one_minus(NodeId a);
  NodeId scale(NodeId a, T factor);
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId slice_cols(NodeId x, std::size_t begin, std::size_t end);
  NodeId stack_rows(std::span<const NodeId> parts);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId softmax_rows(NodeId x);
  /// Softmax over entries whose mask is nonzero; masked entries are exactly 0.
  NodeId masked_softmax_rows(NodeId x, Tensor<T> mask);
  /// Inverted dropout: survivors scaled by 1/(1-rate). Identity unless training.
  NodeId dropout(NodeId x, double rate, bool training, std::mt19937_64& rng);
  NodeId embed_lookup(NodeId table, std::span<const TokenId> ids);
  /// Per-row -log softmax(logits)[target]; result is n x 1.
  NodeId cross_entropy_rows(NodeId logits, std::span<const TokenId> targets);
  /// Row r takes `fresh` where keep[r] != 0 and `old` elsewhere.
  NodeId mask_blend(NodeId fresh, NodeId old, std::span<const std::uint8_t> keep);
  /// blocks (k*B x n) plus x (B x n) added to every block.
  NodeId add_tiled(NodeId blocks, NodeId x);
  /// (k*B x 1) -> (B x k).
  NodeId blocks_to_cols(NodeId x, std::size_t batch);
  /// weights (B x k), blocks (k*B x n) -> row b = sum_t weights[b,t] * blocks[t*B+b].
  NodeId weighted_block_sum(NodeId weights, NodeId blocks);
  /// scale * sum(weights .* x) as a 1 x 1 tensor; weights are constants.
  NodeId weighted_sum(NodeId x, Tensor<T> weights, T scale);
  NodeId sum(NodeId x);

  const Tensor<T>& value(NodeId id) const;
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a 1 x 1 node. Nodes that do not feed the loss get
  /// zero gradients.
  Gradients<T> backward(NodeId loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    Tensor<T> saved;               // probabilities, masks or weights kept for backward
    std::vector<TokenId> ids;      // lookup or target ids
    std::vector<std::uint8_t> keep;
    std::size_t arg0 = 0, arg1 = 0;
    T scalar = T(0);
  };

  NodeId push(Node node);
  const Tensor<T>& val(NodeId id) const { return value(id); }

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
/// `params` is perturbed in place and restored.
template <typename T, typename F>
Tensor<T> finite_diff(F&& f, Tensor<T>& params, T h) {
  Tensor<T> grad(params.shape());
  for (std::size_t i = 0; i < params.size(); ++i) {
    T orig = params[i];
    params[i] = orig + h;
    T up = f(params);
    params[i] = orig - h;
    T down = f(params);
    params[i] = orig;
    grad[i] = (up - down) / (T(2) * h);
  }
  return grad;
}

}  // namespace d2s::nk
