// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace mixer::gemm {

enum class Trans { no, yes };

/// c[m x n] = op(a) * op(b) (or += when accumulate), all row-major and
/// contiguous. op(a) is m x k, op(b) is k x n; with Trans::yes the stored
/// matrix is the transpose (k x m for a, n x k for b).
template <class T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

/// Per-thread count of multiply-accumulates issued through gemm() since the
/// last reset. Used to instrument forward passes.
std::uint64_t mac_count() noexcept;
void reset_mac_count() noexcept;
void add_macs(std::uint64_t n) noexcept;

}  // namespace mixer::gemm
