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

#include "tape.hpp"

#include <cmath>
#include <limits>

namespace d2s::nk {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul_elem";
    case OpKind::kOneMinus: return "one_minus";
    case OpKind::kScale: return "scale";
    case OpKind::kConcatCols: return "concat";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kStackRows: return "stack_rows";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kMaskedSoftmaxRows: return "masked_softmax_rows";
    case OpKind::kDropout: return "dropout";
    case OpKind::kEmbedLookup: return "embed_lookup";
    case OpKind::kCrossEntropyRows: return "cross_entropy_rows";
    case OpKind::kMaskBlend: return "mask_blend";
    case OpKind::kAddTiled: return "add_tiled";
    case OpKind::kBlocksToCols: return "blocks_to_cols";
    case OpKind::kWeightedBlockSum: return "weighted_block_sum";
    case OpKind::kWeightedSum: return "weighted_sum";
    case OpKind::kSum: return "sum";
  }
  return "?";
}

namespace {

template <typename T>
[[noreturn]] void shape_error(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  fail(Errc::kShapeMismatch,
       std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// C (m x n) += A (m x k) * B (k x n)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (m x n) += A (m x k) * B^T, B is n x k
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// C (m x n) += A^T * B, A is k x m, B is k x n
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[p * m + i];
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
T sigmoid_of(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

template <typename T>
const Tensor<T>& Tape<T>::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.borrowed ? *n.borrowed : n.owned;
}

template <typename T>
NodeId Tape<T>::push(Node node) {
  const Tensor<T>& v = node.borrowed ? *node.borrowed : node.owned;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      fail(Errc::kNonFinite, std::string(op_name(node.kind)) + ": non-finite value in output");
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
NodeId Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::reference(const Tensor<T>& value) {
  Node n;
  n.borrowed = &value;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::matmul(NodeId a, NodeId b) {
  const auto& A = val(a);
  const auto& B = val(b);
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  Node n;
  n.kind = OpKind::kMatMul;
  n.inputs = {a, b};
  n.owned = Tensor<T>(A.rows(), B.cols());
  gemm_nn(A.data(), B.data(), n.owned.data(), A.rows(), A.cols(), B.cols());
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::add(NodeId a, NodeId b) {
  const auto& A = val(a);
  const auto& B = val(b);
  if (!A.same_shape(B)) shape_error("add", A, B);
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  n.owned = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.owned[i] += B[i];
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::add_bias(NodeId x, NodeId bias) {
  const auto& X = val(x);
  const auto& Bv = val(bias);
  if (Bv.rows() != 1 || Bv.cols() != X.cols()) shape_error("add_bias", X, Bv);
  Node n;
  n.kind = OpKind::kAddBias;
  n.inputs = {x, bias};
  n.owned = X;
  const std::size_t c = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) n.owned[r * c + j] += Bv[j];
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::sub(NodeId a, NodeId b) {
  const auto& A = val(a);
  const auto& B = val(b);
  if (!A.same_shape(B)) shape_error("sub", A, B);
  Node n;
  n.kind = OpKind::kSub;
  n.inputs = {a, b};
  n.owned = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.owned[i] -= B[i];
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::mul(NodeId a, NodeId b) {
  const auto& A = val(a);
  const auto& B = val(b);
  if (!A.same_shape(B)) shape_error("mul_elem", A, B);
  Node n;
  n.kind = OpKind::kMul;
  n.inputs = {a, b};
  n.owned = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.owned[i] *= B[i];
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::one_minus(NodeId a) {
  Node n;
  n.kind = OpKind::kOneMinus;
  n.inputs = {a};
  n.owned = val(a);
  for (auto& v : n.owned.values()) v = T(1) - v;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::scale(NodeId a, T factor) {
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {a};
  n.scalar = factor;
  n.owned = val(a);
  for (auto& v : n.owned.values()) v *= factor;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::concat_cols(std::span<const NodeId> parts) {
  if (parts.empty()) fail(Errc::kInvalidArgument, "concat: no inputs");
  const std::size_t rows = val(parts[0]).rows();
  std::size_t cols = 0;
  for (auto p : parts) {
    if (val(p).rows() != rows) shape_error("concat", val(parts[0]), val(p));
    cols += val(p).cols();
  }
  Node n;
  n.kind = OpKind::kConcatCols;
  n.inputs.assign(parts.begin(), parts.end());
  n.owned = Tensor<T>(rows, cols);
  std::size_t off = 0;
  for (auto p : parts) {
    const auto& P = val(p);
    const std::size_t pc = P.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(P.data() + r * pc, pc, n.owned.data() + r * cols + off);
    off += pc;
  }
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::slice_cols(NodeId x, std::size_t begin, std::size_t end) {
  const auto& X = val(x);
  if (begin > end || end > X.cols())
    fail(Errc::kShapeMismatch, "slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                   ") outside " + X.shape_string());
  Node n;
  n.kind = OpKind::kSliceCols;
  n.inputs = {x};
  n.arg0 = begin;
  n.arg1 = end;
  const std::size_t w = end - begin;
  n.owned = Tensor<T>(X.rows(), w);
  for (std::size_t r = 0; r < X.rows(); ++r)
    std::copy_n(X.data() + r * X.cols() + begin, w, n.owned.data() + r * w);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::stack_rows(std::span<const NodeId> parts) {
  if (parts.empty()) fail(Errc::kInvalidArgument, "stack_rows: no inputs");
  const std::size_t cols = val(parts[0]).cols();
  std::size_t rows = 0;
  for (auto p : parts) {
    if (val(p).cols() != cols) shape_error("stack_rows", val(parts[0]), val(p));
    rows += val(p).rows();
  }
  Node n;
  n.kind = OpKind::kStackRows;
  n.inputs.assign(parts.begin(), parts.end());
  n.owned = Tensor<T>(rows, cols);
  std::size_t off = 0;
  for (auto p : parts) {
    const auto& P = val(p);
    std::copy_n(P.data(), P.size(), n.owned.data() + off);
    off += P.size();
  }
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::sigmoid(NodeId x) {
  Node n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {x};
  n.owned = val(x);
  for (auto& v : n.owned.values()) v = sigmoid_of(v);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::tanh(NodeId x) {
  Node n;
  n.kind = OpKind::kTanh;
  n.inputs = {x};
  n.owned = val(x);
  for (auto& v : n.owned.values()) v = std::tanh(v);
  return push(std::move(n));
}

namespace {

// Writes the softmax of `row` restricted to keep[j] != 0 into out.
template <typename T>
void softmax_row(const T* row, const T* keep, T* out, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (!keep || keep[j] != T(0)) mx = std::max(mx, row[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = (!keep || keep[j] != T(0)) ? std::exp(row[j] - mx) : T(0);
    total += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= total;
}

}  // namespace

template <typename T>
NodeId Tape<T>::softmax_rows(NodeId x) {
  const auto& X = val(x);
  Node n;
  n.kind = OpKind::kSoftmaxRows;
  n.inputs = {x};
  n.owned = Tensor<T>(X.shape());
  const std::size_t c = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) softmax_row<T>(X.data() + r * c, nullptr, n.owned.data() + r * c, c);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::masked_softmax_rows(NodeId x, Tensor<T> mask) {
  const auto& X = val(x);
  if (!X.same_shape(mask)) shape_error("masked_softmax_rows", X, mask);
  const std::size_t c = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) {
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) any = any || mask(r, j) != T(0);
    if (!any) fail(Errc::kInvalidArgument, "masked_softmax_rows: row " + std::to_string(r) + " is fully masked");
  }
  Node n;
  n.kind = OpKind::kMaskedSoftmaxRows;
  n.inputs = {x};
  n.owned = Tensor<T>(X.shape());
  for (std::size_t r = 0; r < X.rows(); ++r)
    softmax_row<T>(X.data() + r * c, mask.data() + r * c, n.owned.data() + r * c, c);
  n.saved = std::move(mask);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::dropout(NodeId x, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(Errc::kInvalidArgument, "dropout rate must be in [0,1)");
  Node n;
  n.kind = OpKind::kDropout;
  n.inputs = {x};
  n.owned = val(x);
  if (training && rate > 0.0) {
    n.saved = Tensor<T>(n.owned.shape());
    std::bernoulli_distribution drop(rate);
    const T survivor = T(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < n.owned.size(); ++i) {
      n.saved[i] = drop(rng) ? T(0) : survivor;
      n.owned[i] *= n.saved[i];
    }
  }
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::embed_lookup(NodeId table, std::span<const TokenId> ids) {
  const auto& E = val(table);
  const std::size_t dim = E.cols();
  Node n;
  n.kind = OpKind::kEmbedLookup;
  n.inputs = {table};
  n.ids.assign(ids.begin(), ids.end());
  n.owned = Tensor<T>(ids.size(), dim);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= E.rows())
      fail(Errc::kInvalidArgument, "embed_lookup: token id " + std::to_string(ids[r]) + " outside table of " +
                                       std::to_string(E.rows()) + " rows");
    std::copy_n(E.data() + static_cast<std::size_t>(ids[r]) * dim, dim, n.owned.data() + r * dim);
  }
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::cross_entropy_rows(NodeId logits, std::span<const TokenId> targets) {
  const auto& X = val(logits);
  if (targets.size() != X.rows())
    fail(Errc::kShapeMismatch, "cross_entropy_rows: " + std::to_string(targets.size()) + " targets for logits " +
                                   X.shape_string());
  const std::size_t c = X.cols();
  Node n;
  n.kind = OpKind::kCrossEntropyRows;
  n.inputs = {logits};
  n.ids.assign(targets.begin(), targets.end());
  n.saved = Tensor<T>(X.rows(), c);
  n.owned = Tensor<T>(X.rows(), 1);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= c)
      fail(Errc::kInvalidArgument, "cross_entropy_rows: target " + std::to_string(targets[r]) + " out of range");
    const T* row = X.data() + r * c;
    T mx = *std::max_element(row, row + c);
    T total = 0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) n.saved(r, j) = std::exp(row[j] - lse);
    n.owned[r] = lse - row[static_cast<std::size_t>(targets[r])];
  }
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::mask_blend(NodeId fresh, NodeId old, std::span<const std::uint8_t> keep) {
  const auto& F = val(fresh);
  const auto& O = val(old);
  if (!F.same_shape(O)) shape_error("mask_blend", F, O);
  if (keep.size() != F.rows())
    fail(Errc::kShapeMismatch, "mask_blend: " + std::to_string(keep.size()) + " mask rows for " + F.shape_string());
  Node n;
  n.kind = OpKind::kMaskBlend;
  n.inputs = {fresh, old};
  n.keep.assign(keep.begin(), keep.end());
  n.owned = F;
  const std::size_t c = F.cols();
  for (std::size_t r = 0; r < F.rows(); ++r)
    if (!keep[r]) std::copy_n(O.data() + r * c, c, n.owned.data() + r * c);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::add_tiled(NodeId blocks, NodeId x) {
  const auto& Bk = val(blocks);
  const auto& X = val(x);
  if (Bk.cols() != X.cols() || X.rows() == 0 || Bk.rows() % X.rows() != 0) shape_error("add_tiled", Bk, X);
  Node n;
  n.kind = OpKind::kAddTiled;
  n.inputs = {blocks, x};
  n.owned = Bk;
  const std::size_t b = X.rows(), c = X.cols();
  for (std::size_t r = 0; r < Bk.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) n.owned[r * c + j] += X[(r % b) * c + j];
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::blocks_to_cols(NodeId x, std::size_t batch) {
  const auto& X = val(x);
  if (X.cols() != 1 || batch == 0 || X.rows() % batch != 0)
    fail(Errc::kShapeMismatch, "blocks_to_cols: cannot fold " + X.shape_string() + " into " + std::to_string(batch) +
                                   " rows");
  const std::size_t k = X.rows() / batch;
  Node n;
  n.kind = OpKind::kBlocksToCols;
  n.inputs = {x};
  n.arg0 = batch;
  n.owned = Tensor<T>(batch, k);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t b = 0; b < batch; ++b) n.owned(b, t) = X[t * batch + b];
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::weighted_block_sum(NodeId weights, NodeId blocks) {
  const auto& W = val(weights);
  const auto& Bk = val(blocks);
  const std::size_t batch = W.rows(), k = W.cols(), c = Bk.cols();
  if (Bk.rows() != batch * k) shape_error("weighted_block_sum", W, Bk);
  Node n;
  n.kind = OpKind::kWeightedBlockSum;
  n.inputs = {weights, blocks};
  n.owned = Tensor<T>(batch, c);
  for (std::size_t b = 0; b < batch; ++b) {
    T* out = n.owned.data() + b * c;
    for (std::size_t t = 0; t < k; ++t) {
      const T w = W(b, t);
      const T* src = Bk.data() + (t * batch + b) * c;
      for (std::size_t j = 0; j < c; ++j) out[j] += w * src[j];
    }
  }
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::weighted_sum(NodeId x, Tensor<T> weights, T scale) {
  const auto& X = val(x);
  if (!X.same_shape(weights)) shape_error("weighted_sum", X, weights);
  Node n;
  n.kind = OpKind::kWeightedSum;
  n.inputs = {x};
  n.scalar = scale;
  T acc = 0;
  for (std::size_t i = 0; i < X.size(); ++i) acc += weights[i] * X[i];
  n.owned = Tensor<T>(1, 1, scale * acc);
  n.saved = std::move(weights);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::sum(NodeId x) {
  const auto& X = val(x);
  T acc = 0;
  for (auto v : X.values()) acc += v;
  Node n;
  n.kind = OpKind::kSum;
  n.inputs = {x};
  n.owned = Tensor<T>(1, 1, acc);
  return push(std::move(n));
}

template <typename T>
Gradients<T> Tape<T>::backward(NodeId loss) const {
  const auto& L = value(loss);
  if (L.size() != 1) fail(Errc::kShapeMismatch, "backward: loss must be scalar, got " + L.shape_string());
  Gradients<T> g(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) g[i] = Tensor<T>(value(static_cast<NodeId>(i)).shape());
  g[loss][0] = T(1);

  for (std::size_t idx = loss + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    if (node.kind == OpKind::kLeaf) continue;
    const Tensor<T>& dy = g[idx];
    bool any = false;
    for (auto v : dy.values()) {
      if (v != T(0)) {
        any = true;
        break;
      }
    }
    if (!any) continue;
    const Tensor<T>& y = value(static_cast<NodeId>(idx));
    const auto& in = node.inputs;

    switch (node.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul: {
        const auto& A = value(in[0]);
        const auto& B = value(in[1]);
        gemm_nt(dy.data(), B.data(), g[in[0]].data(), A.rows(), B.cols(), A.cols());
        gemm_tn(A.data(), dy.data(), g[in[1]].data(), A.cols(), A.rows(), B.cols());
        break;
      }
      case OpKind::kAdd:
        for (std::size_t i = 0; i < dy.size(); ++i) {
          g[in[0]][i] += dy[i];
          g[in[1]][i] += dy[i];
        }
        break;
      case OpKind::kAddBias: {
        const std::size_t c = dy.cols();
        for (std::size_t i = 0; i < dy.size(); ++i) {
          g[in[0]][i] += dy[i];
          g[in[1]][i % c] += dy[i];
        }
        break;
      }
      case OpKind::kSub:
        for (std::size_t i = 0; i < dy.size(); ++i) {
          g[in[0]][i] += dy[i];
          g[in[1]][i] -= dy[i];
        }
        break;
      case OpKind::kMul: {
        const auto& A = value(in[0]);
        const auto& B = value(in[1]);
        for (std::size_t i = 0; i < dy.size(); ++i) {
          g[in[0]][i] += dy[i] * B[i];
          g[in[1]][i] += dy[i] * A[i];
        }
        break;
      }
      case OpKind::kOneMinus:
        for (std::size_t i = 0; i < dy.size(); ++i) g[in[0]][i] -= dy[i];
        break;
      case OpKind::kScale:
        for (std::size_t i = 0; i < dy.size(); ++i) g[in[0]][i] += node.scalar * dy[i];
        break;
      case OpKind::kConcatCols: {
        const std::size_t cols = dy.cols();
        std::size_t off = 0;
        for (auto p : in) {
          auto& gp = g[p];
          const std::size_t pc = gp.cols();
          for (std::size_t r = 0; r < dy.rows(); ++r)
            for (std::size_t j = 0; j < pc; ++j) gp[r * pc + j] += dy[r * cols + off + j];
          off += pc;
        }
        break;
      }
      case OpKind::kSliceCols: {
        auto& gx = g[in[0]];
        const std::size_t xc = gx.cols(), w = node.arg1 - node.arg0;
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t j = 0; j < w; ++j) gx[r * xc + node.arg0 + j] += dy[r * w + j];
        break;
      }
      case OpKind::kStackRows: {
        std::size_t off = 0;
        for (auto p : in) {
          auto& gp = g[p];
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += dy[off + i];
          off += gp.size();
        }
        break;
      }
      case OpKind::kSigmoid:
        for (std::size_t i = 0; i < dy.size(); ++i) g[in[0]][i] += dy[i] * y[i] * (T(1) - y[i]);
        break;
      case OpKind::kTanh:
        for (std::size_t i = 0; i < dy.size(); ++i) g[in[0]][i] += dy[i] * (T(1) - y[i] * y[i]);
        break;
      case OpKind::kSoftmaxRows:
      case OpKind::kMaskedSoftmaxRows: {
        const std::size_t c = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          T dot = 0;
          for (std::size_t j = 0; j < c; ++j) dot += dy[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) g[in[0]][r * c + j] += y[r * c + j] * (dy[r * c + j] - dot);
        }
        break;
      }
      case OpKind::kDropout:
        if (node.saved.empty()) {
          for (std::size_t i = 0; i < dy.size(); ++i) g[in[0]][i] += dy[i];
        } else {
          for (std::size_t i = 0; i < dy.size(); ++i) g[in[0]][i] += dy[i] * node.saved[i];
        }
        break;
      case OpKind::kEmbedLookup: {
        auto& gt = g[in[0]];
        const std::size_t dim = gt.cols();
        for (std::size_t r = 0; r < node.ids.size(); ++r) {
          T* dst = gt.data() + static_cast<std::size_t>(node.ids[r]) * dim;
          for (std::size_t j = 0; j < dim; ++j) dst[j] += dy[r * dim + j];
        }
        break;
      }
      case OpKind::kCrossEntropyRows: {
        auto& gx = g[in[0]];
        const std::size_t c = gx.cols();
        for (std::size_t r = 0; r < node.ids.size(); ++r) {
          const T d = dy[r];
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += d * node.saved(r, j);
          gx[r * c + static_cast<std::size_t>(node.ids[r])] -= d;
        }
        break;
      }
      case OpKind::kMaskBlend: {
        const std::size_t c = dy.cols();
        for (std::size_t r = 0; r < dy.rows(); ++r) {
          auto& dst = g[node.keep[r] ? in[0] : in[1]];
          for (std::size_t j = 0; j < c; ++j) dst[r * c + j] += dy[r * c + j];
        }
        break;
      }
      case OpKind::kAddTiled: {
        auto& gb = g[in[0]];
        auto& gx = g[in[1]];
        const std::size_t b = gx.rows(), c = gx.cols();
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t j = 0; j < c; ++j) {
            gb[r * c + j] += dy[r * c + j];
            gx[(r % b) * c + j] += dy[r * c + j];
          }
        break;
      }
      case OpKind::kBlocksToCols: {
        auto& gx = g[in[0]];
        const std::size_t batch = node.arg0, k = dy.cols();
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t b = 0; b < batch; ++b) gx[t * batch + b] += dy(b, t);
        break;
      }
      case OpKind::kWeightedBlockSum: {
        const auto& W = value(in[0]);
        const auto& Bk = value(in[1]);
        auto& gw = g[in[0]];
        auto& gb = g[in[1]];
        const std::size_t batch = W.rows(), k = W.cols(), c = Bk.cols();
        for (std::size_t b = 0; b < batch; ++b) {
          const T* d = dy.data() + b * c;
          for (std::size_t t = 0; t < k; ++t) {
            const std::size_t row = (t * batch + b) * c;
            T acc = 0;
            for (std::size_t j = 0; j < c; ++j) {
              acc += d[j] * Bk[row + j];
              gb[row + j] += W(b, t) * d[j];
            }
            gw(b, t) += acc;
          }
        }
        break;
      }
      case OpKind::kWeightedSum: {
        const T d = dy[0] * node.scalar;
        for (std::size_t i = 0; i < node.saved.size(); ++i) g[in[0]][i] += d * node.saved[i];
        break;
      }
      case OpKind::kSum:
        for (auto& v : g[in[0]].values()) v += dy[0];
        break;
    }
  }
  return g;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace d2s::nk
