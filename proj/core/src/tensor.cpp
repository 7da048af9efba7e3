// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mixer {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extent must be >= 1, got " + shape_str(shape));
  }
}

}  // namespace

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : m_shape(std::move(shape)) {
  check_extents(m_shape);
  m_data.assign(shape_size(m_shape), fill);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : m_shape(std::move(shape)), m_data(std::move(data)) {
  check_extents(m_shape);
  if (m_data.size() != shape_size(m_shape)) {
    throw DimensionError("tensor of shape " + shape_str(m_shape) + " needs " +
                         std::to_string(shape_size(m_shape)) + " elements, got " +
                         std::to_string(m_data.size()));
  }
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= m_shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(m_shape));
  }
  return m_shape[axis];
}

template <class T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != m_shape.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " does not match " +
                         shape_str(m_shape));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= m_shape[axis]) throw DimensionError("index out of range for " + shape_str(m_shape));
    off = off * m_shape[axis] + i;
    ++axis;
  }
  return off;
}

template <class T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return m_data[offset(index)];
}

template <class T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return m_data[offset(index)];
}

template <class T>
T Tensor<T>::item() const {
  if (m_data.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(m_shape));
  return m_data[0];
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  return Tensor(std::move(shape), m_data);
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  return Tensor(std::move(shape), std::move(m_data));
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(m_data.begin(), m_data.end(), value);
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
T sum(const Tensor<T>& a) {
  T s = 0;
  for (auto v : a.data()) s += v;
  return s;
}

template class Tensor<float>;
template class Tensor<double>;
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);
template float sum(const Tensor<float>&);
template double sum(const Tensor<double>&);

}  // namespace mixer
