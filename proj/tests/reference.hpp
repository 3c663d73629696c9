#pragma once

// Straight-line double loops over raw values, used as oracles for the
// tensor-graph implementations.

#include <cmath>
#include <vector>

#include "dbm/encoder.hpp"

namespace reference {

using Mat = std::vector<double>;

inline std::vector<double> raw(const dbm::Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline Mat matmul(const Mat& a, const Mat& b, std::size_t m, std::size_t k, std::size_t n) {
  Mat c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }
inline double softplus(double v) { return std::log1p(std::exp(v)); }

inline Mat reverse(const Mat& x, std::size_t rows, std::size_t cols) {
  Mat out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[(rows - 1 - r) * cols + c] = x[r * cols + c];
  return out;
}

inline Mat selective_scan(const Mat& x, std::size_t L, std::size_t D,
                          const dbm::ssm::SelectiveParams& p) {
  const std::size_t N = p.state(), R = p.rank(), P = R + 2 * N;
  auto W = raw(p.x_proj), up = raw(p.dt_proj), bias = raw(p.dt_bias), alog = raw(p.a_log);
  Mat h(D * N, 0.0), y(L * D, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    Mat proj(P, 0.0);
    for (std::size_t j = 0; j < P; ++j)
      for (std::size_t d = 0; d < D; ++d) proj[j] += x[t * D + d] * W[d * P + j];
    for (std::size_t d = 0; d < D; ++d) {
      double pre = bias[d];
      for (std::size_t r = 0; r < R; ++r) pre += proj[r] * up[r * D + d];
      const double delta = softplus(pre);
      double out = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const double a = -std::exp(alog[d * N + n]);
        const double abar = std::exp(delta * a);
        const double bbar = std::expm1(delta * a) / a * proj[R + n];
        h[d * N + n] = abar * h[d * N + n] + bbar * x[t * D + d];
        out += proj[R + N + n] * h[d * N + n];
      }
      y[t * D + d] = out;
    }
  }
  return y;
}

// causal depthwise conv, tap K-1 is the current row
inline Mat conv(const Mat& x, std::size_t L, std::size_t D, const Mat& k, const Mat& b,
                std::size_t K) {
  Mat out(L * D, 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      double s = b[d];
      for (std::size_t j = 0; j < K; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(K - 1);
        if (src >= 0) s += k[d * K + j] * x[src * D + d];
      }
      out[t * D + d] = s;
    }
  return out;
}

inline Mat direction(const Mat& xp, const Mat& gate, std::size_t L, std::size_t E,
                     const dbm::encoder::DirectionParams& p) {
  const std::size_t K = p.conv_kernel.cols();
  Mat c = conv(xp, L, E, raw(p.conv_kernel), raw(p.conv_bias), K);
  for (auto& v : c) v = silu(v);
  Mat y = selective_scan(c, L, E, p.scan);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= gate[i];
  return y;
}

// returns (output, mixer)
inline std::pair<Mat, Mat> block(const Mat& x, std::size_t L, std::size_t C,
                                 const dbm::encoder::BlockParams& p) {
  const std::size_t E = p.inner();
  auto scale = raw(p.norm_scale);
  Mat u(L * C);
  for (std::size_t t = 0; t < L; ++t) {
    double ms = 0;
    for (std::size_t c = 0; c < C; ++c) ms += x[t * C + c] * x[t * C + c];
    const double inv = 1.0 / std::sqrt(ms / C + 1e-5);
    for (std::size_t c = 0; c < C; ++c) u[t * C + c] = x[t * C + c] * inv * scale[c];
  }
  Mat xz = matmul(u, raw(p.in_proj), L, C, 2 * E);
  Mat xp(L * E), gate(L * E);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) {
      xp[t * E + e] = xz[t * 2 * E + e];
      gate[t * E + e] = silu(xz[t * 2 * E + E + e]);
    }
  Mat f = direction(xp, gate, L, E, p.forward);
  Mat b = reverse(direction(reverse(xp, L, E), reverse(gate, L, E), L, E, p.backward), L, E);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += b[i];
  Mat mixer = matmul(f, raw(p.out_proj), L, E, C);
  Mat out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += mixer[i];
  return {out, mixer};
}

}  // namespace reference
