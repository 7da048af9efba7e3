// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/gemm.hpp"

#include <algorithm>
#include <vector>

namespace mixer::gemm {

namespace {

thread_local std::uint64_t t_macs = 0;

constexpr std::size_t kBlockN = 256;
constexpr std::size_t kBlockK = 128;

// c[m x n] += a[m x k] * b[k x n]; lda/ldb/ldc are row strides.
template <class T>
void kernel_nn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a, std::size_t lda,
               const T* __restrict b, std::size_t ldb, T* __restrict c, std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t j1 = std::min(n, j0 + kBlockN);
    const std::size_t nb = j1 - j0;
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        T* __restrict c0 = c + (i + 0) * ldc + j0;
        T* __restrict c1 = c + (i + 1) * ldc + j0;
        T* __restrict c2 = c + (i + 2) * ldc + j0;
        T* __restrict c3 = c + (i + 3) * ldc + j0;
        for (std::size_t p = p0; p < p1; ++p) {
          const T a0 = a[(i + 0) * lda + p];
          const T a1 = a[(i + 1) * lda + p];
          const T a2 = a[(i + 2) * lda + p];
          const T a3 = a[(i + 3) * lda + p];
          const T* __restrict brow = b + p * ldb + j0;
          for (std::size_t j = 0; j < nb; ++j) {
            const T bv = brow[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* __restrict ci = c + i * ldc + j0;
        for (std::size_t p = p0; p < p1; ++p) {
          const T av = a[i * lda + p];
          const T* __restrict brow = b + p * ldb + j0;
          for (std::size_t j = 0; j < nb; ++j) ci[j] += av * brow[j];
        }
      }
    }
  }
}

template <class T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile);
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t cc = c0; cc < c1; ++cc) out[cc * rows + r] = src[r * cols + cc];
    }
  }
  return out;
}

}  // namespace

template <class T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  t_macs += static_cast<std::uint64_t>(m) * n * k;
  if (m == 0 || n == 0 || k == 0) return;

  std::vector<T> a_buf;
  std::vector<T> b_buf;
  const T* a_nn = a;
  const T* b_nn = b;
  if (trans_a == Trans::yes) {
    a_buf = transposed(a, k, m);
    a_nn = a_buf.data();
  }
  if (trans_b == Trans::yes) {
    b_buf = transposed(b, n, k);
    b_nn = b_buf.data();
  }
  kernel_nn(m, n, k, a_nn, k, b_nn, n, c, n);
}

std::uint64_t mac_count() noexcept { return t_macs; }
void reset_mac_count() noexcept { t_macs = 0; }
void add_macs(std::uint64_t n) noexcept { t_macs += n; }

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, const float*, const float*,
                          float*, bool);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);

}  // namespace mixer::gemm
