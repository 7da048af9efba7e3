// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mixer/errors.hpp"

namespace mixer {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Rank 0 is a scalar with one element; every extent
/// of a higher-rank tensor is at least 1.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : m_data(1, T(0)) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor from(Shape shape, std::initializer_list<T> values) {
    return Tensor(std::move(shape), std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return m_shape; }
  std::size_t rank() const noexcept { return m_shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return m_data.size(); }

  std::span<T> data() noexcept { return m_data; }
  std::span<const T> data() const noexcept { return m_data; }
  T* ptr() noexcept { return m_data.data(); }
  const T* ptr() const noexcept { return m_data.data(); }

  T& operator[](std::size_t i) noexcept { return m_data[i]; }
  const T& operator[](std::size_t i) const noexcept { return m_data[i]; }

  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;

  /// Scalar value of a one-element tensor.
  T item() const;

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(T value);

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(m_data.begin(), m_data.end());
    return Tensor<U>(m_shape, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape m_shape;
  std::vector<T> m_data;
};

/// Largest elementwise |a - b|. Shapes must match.
template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
T sum(const Tensor<T>& a);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mixer
