// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used only by tests. They are written directly
// from the mathematical definitions with scalar loops and share no code with
// the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, std::vector<double>(c, 0.0)); }

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::size_t m = a.size(), k = b.size(), n = b.empty() ? 0 : b[0].size();
  Matrix c = zeros(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
      c[i][j] = s;
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t = zeros(a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

/// erf by its Maclaurin series, erf(x) = 2/sqrt(pi) sum (-1)^n x^(2n+1) / (n! (2n+1)),
/// accurate to double rounding for |x| <= 3.
inline double erf_series(double x) {
  if (std::abs(x) > 2.5) {
    // Continued fraction for erfc, evaluated from the tail: the power series
    // cancels catastrophically this far out.
    const double a = std::abs(x);
    double f = a;
    for (int n = 300; n >= 1; --n) f = a + (n / 2.0) / f;
    const double erfc = std::exp(-a * a) / std::sqrt(M_PI) / f;
    return x > 0 ? 1.0 - erfc : erfc - 1.0;
  }
  double term = x, total = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const double add = term / (2 * n + 1);
    total += add;
    if (std::abs(add) < 1e-18 * std::abs(total)) break;
  }
  return 2.0 / std::sqrt(M_PI) * total;
}

inline double phi_series(double x) { return 0.5 * (1.0 + erf_series(x / std::sqrt(2.0))); }
inline double gelu(double x) { return x * phi_series(x); }

inline std::vector<double> layernorm(const std::vector<double>& x, const std::vector<double>& gamma,
                                     const std::vector<double>& beta, double eps) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gamma[i] * (x[i] - mean) / std::sqrt(var + eps) + beta[i];
  return y;
}

/// Mean over rows of -sum t log softmax(z) via a max-shifted log-sum-exp.
inline double softmax_xent(const Matrix& logits, const Matrix& targets) {
  double total = 0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const double m = *std::max_element(logits[b].begin(), logits[b].end());
    double se = 0;
    for (double z : logits[b]) se += std::exp(z - m);
    const double lse = m + std::log(se);
    for (std::size_t k = 0; k < logits[b].size(); ++k) total -= targets[b][k] * (logits[b][k] - lse);
  }
  return total / double(logits.size());
}

/// Solves A x = b for every column of B by Gaussian elimination with partial pivoting.
inline Matrix gauss_solve(Matrix a, Matrix b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    if (a[col][col] == 0) throw std::runtime_error("singular system");
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      if (f == 0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      for (std::size_t c = 0; c < b[0].size(); ++c) b[r][c] -= f * b[col][c];
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (auto& v : b[r]) v /= a[r][r];
  return b;
}

/// Fourth-order central difference of f at x with step h.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (8 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12 * h);
}

inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Parameter count of a standard Mixer written from the layer list: stem
/// conv with bias, per block two LayerNorms (2C each), token MLP
/// (S*Ds + Ds + Ds*S + S) and channel MLP (C*Dc + Dc + Dc*C + C), plus the
/// pre-head LayerNorm. The classifier head is excluded.
inline std::uint64_t mixer_params(std::uint64_t layers, std::uint64_t patch, std::uint64_t c, std::uint64_t ds,
                                  std::uint64_t dc, std::uint64_t h, std::uint64_t w, std::uint64_t ch = 3) {
  const std::uint64_t s = (h / patch) * (w / patch);
  const std::uint64_t stem = patch * patch * ch * c + c;
  const std::uint64_t token = s * ds + ds + ds * s + s;
  const std::uint64_t channel = c * dc + dc + dc * c + c;
  const std::uint64_t norms = 2 * 2 * c;
  return stem + layers * (token + channel + norms) + 2 * c;
}

// Scalar-loop forward pass of a standard Mixer on one image, written from
// the block equations:
//   U[:, i] = X[:, i] + W2 gelu(W1 LN(X)[:, i] + b1) + b2      (token mixing)
//   Y[j, :] = U[j, :] + W4 gelu(W3 LN(U)[j, :] + b3) + b4      (channel mixing)
// Tokens are patches in raster order; a patch is flattened (row, col, channel).
struct BlockWeights {
  std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b;
  Matrix w1, w2, w3, w4;  // [Ds,S], [S,Ds], [Dc,C], [C,Dc]
  std::vector<double> b1, b2, b3, b4;
};

inline Matrix mixer_block(const Matrix& x, const BlockWeights& p) {
  const std::size_t s = x.size(), c = x[0].size(), ds = p.w1.size(), dc = p.w3.size();
  Matrix ln(s);
  for (std::size_t t = 0; t < s; ++t) ln[t] = layernorm(x[t], p.ln1_g, p.ln1_b, 1e-6);
  Matrix u = x;
  for (std::size_t i = 0; i < c; ++i) {
    std::vector<double> hidden(ds);
    for (std::size_t d = 0; d < ds; ++d) {
      double a = p.b1[d];
      for (std::size_t t = 0; t < s; ++t) a += p.w1[d][t] * ln[t][i];
      hidden[d] = gelu(a);
    }
    for (std::size_t t = 0; t < s; ++t) {
      double a = p.b2[t];
      for (std::size_t d = 0; d < ds; ++d) a += p.w2[t][d] * hidden[d];
      u[t][i] += a;
    }
  }
  Matrix y = u;
  for (std::size_t t = 0; t < s; ++t) {
    const auto z = layernorm(u[t], p.ln2_g, p.ln2_b, 1e-6);
    std::vector<double> hidden(dc);
    for (std::size_t d = 0; d < dc; ++d) {
      double a = p.b3[d];
      for (std::size_t i = 0; i < c; ++i) a += p.w3[d][i] * z[i];
      hidden[d] = gelu(a);
    }
    for (std::size_t i = 0; i < c; ++i) {
      double a = p.b4[i];
      for (std::size_t d = 0; d < dc; ++d) a += p.w4[i][d] * hidden[d];
      y[t][i] += a;
    }
  }
  return y;
}

}  // namespace oracle
