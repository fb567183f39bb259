// Copyright 2026 The tqat Authors. All Rights Reserved.
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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tqat/error.hpp"

namespace tqat {

using Shape = std::vector<std::size_t>;
using Token = std::int32_t;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape);

// Dense row-major array. Value semantics; copies copy the buffer.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), T(0)) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
      throw DimensionError("tensor shape " + to_string(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static BasicTensor full(Shape shape, T value) {
    BasicTensor t(std::move(shape));
    for (auto& x : t.data_) x = value;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rows/cols of the tensor viewed as a matrix over its last dimension.
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const noexcept { return cols() == 0 ? 0 : data_.size() / cols(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace tqat
