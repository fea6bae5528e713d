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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace d2s::nk {

/// Dense row-major tensor of rank 1 or 2. A rank-1 tensor of length n
/// behaves as a 1 x n row wherever a matrix is expected.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0))
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0)) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 2) fail(Errc::kInvalidArgument, "tensor rank must be 1 or 2");
    std::size_t n = 1;
    for (auto d : shape_) n *= d;
    data_.assign(n, fill);
  }

  static Tensor vector(std::size_t n, T fill = T(0)) { return Tensor(std::vector<std::size_t>{n}, fill); }
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<T> values) {
    if (values.size() != rows * cols)
      fail(Errc::kShapeMismatch, "tensor data length " + std::to_string(values.size()) +
                                     " does not match shape [" + std::to_string(rows) + "x" +
                                     std::to_string(cols) + "]");
    Tensor t;
    t.shape_ = {rows, cols};
    t.data_ = std::move(values);
    return t;
  }
  static Tensor from_vector(std::vector<T> values) {
    Tensor t;
    t.shape_ = {values.size()};
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }
  std::string shape_string() const {
    if (shape_.size() == 1) return "[" + std::to_string(shape_[0]) + "]";
    return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_{0, 0};
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
  Tensor<To> out(src.shape());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return out;
}

}  // namespace d2s::nk
