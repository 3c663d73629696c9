#pragma once

// Per-row / per-channel kernel bodies shared by the serial and OpenMP drivers,
// so both variants run the exact same floating-point sequence.

#include <cmath>
#include <cstddef>
#include <span>

#include "dbm/kernels.hpp"

namespace dbm::kernels::detail {

inline void gemm_row(bool trans_a, bool trans_b, std::size_t i, std::size_t m,
                     std::size_t n, std::size_t k, const double* a,
                     const double* b, double* c) {
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = trans_a ? a[p * m + i] : a[i * k + p];
    if (aip == 0.0) continue;
    if (trans_b) {
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
    } else {
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

inline void scan_forward_channel(ScanDims dims, const ScanInputs& in,
                                 Discretization mode, std::size_t d, double* y,
                                 double* states, double* h) {
  const std::size_t L = dims.length, D = dims.channels, N = dims.state;
  for (std::size_t n = 0; n < N; ++n) h[n] = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const double dt = in.delta[t * D + d];
    const double u = in.u[t * D + d];
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double a = in.a[d * N + n];
      const double z = dt * a;
      const double coef = mode == Discretization::zoh ? dt * zoh_phi(z) : dt;
      h[n] = std::exp(z) * h[n] + coef * in.b[t * N + n] * u;
      acc += in.c[t * N + n] * h[n];
      states[(d * L + t) * N + n] = h[n];
    }
    y[t * D + d] = acc;
  }
}

// Channel-local part of the reverse sweep. dB/dC contributions go to per-channel
// scratch ([L x N] each) and are reduced by the caller in channel order.
inline void scan_backward_channel(ScanDims dims, const ScanInputs& in,
                                  Discretization mode, std::size_t d,
                                  const double* states, const double* grad_y,
                                  const ScanGrads& out, double* db_part,
                                  double* dc_part, double* gh) {
  const std::size_t L = dims.length, D = dims.channels, N = dims.state;
  for (std::size_t n = 0; n < N; ++n) gh[n] = 0.0;
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t t = L - 1 - step;
    const double dt = in.delta[t * D + d];
    const double u = in.u[t * D + d];
    const double gy = grad_y[t * D + d];
    double g_delta = 0.0, g_u = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double a = in.a[d * N + n];
      const double bn = in.b[t * N + n];
      const double h = states[(d * L + t) * N + n];
      const double hprev = t > 0 ? states[(d * L + t - 1) * N + n] : 0.0;
      const double z = dt * a;
      const double abar = std::exp(z);
      double coef, dcoef_ddelta, dcoef_da;
      if (mode == Discretization::zoh) {
        coef = dt * zoh_phi(z);
        dcoef_ddelta = abar;  // d/ddelta [delta * phi(delta a)] = e^z
        dcoef_da = dt * dt * zoh_phi_prime(z);
      } else {
        coef = dt;
        dcoef_ddelta = 1.0;
        dcoef_da = 0.0;
      }
      gh[n] += in.c[t * N + n] * gy;
      dc_part[t * N + n] = gy * h;
      const double g = gh[n];
      const double g_abar = g * hprev;
      g_delta += g_abar * abar * a + g * dcoef_ddelta * bn * u;
      out.a[d * N + n] += g_abar * abar * dt + g * dcoef_da * bn * u;
      db_part[t * N + n] = g * coef * u;
      g_u += g * coef * bn;
      gh[n] = g * abar;
    }
    out.delta[t * D + d] += g_delta;
    out.u[t * D + d] += g_u;
  }
}

inline void cosine_row(std::size_t i, const double* a, const double* norm_a,
                       const double* b, const double* norm_b, std::size_t nb,
                       std::size_t k, double* out) {
  for (std::size_t j = 0; j < nb; ++j) {
    double dot = 0.0;
    for (std::size_t p = 0; p < k; ++p) dot += a[i * k + p] * b[j * k + p];
    double s = dot / std::sqrt(norm_a[i] * norm_b[j]);
    out[i * nb + j] = s > 1.0 ? 1.0 : (s < -1.0 ? -1.0 : s);
  }
}

inline double squared_norm(const double* row, std::size_t k) {
  double s = 0.0;
  for (std::size_t p = 0; p < k; ++p) s += row[p] * row[p];
  return s;
}

}  // namespace dbm::kernels::detail
