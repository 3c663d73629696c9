#pragma once

// Data-parallel numeric kernels. Every kernel ships a serial reference and an
// OpenMP variant; the two produce bitwise-identical results because the
// parallel split never changes the per-element accumulation order.

#include <cmath>
#include <cstddef>
#include <span>

namespace dbm::kernels {

// ---------------------------------------------------------------------------
// Dense products: C[m x n] += op(A) * op(B), op(A) is m x k, op(B) is k x n.
// Row-major storage; trans_a means A is stored k x m.

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, std::span<const double> a,
                 std::span<const double> b, std::span<double> c);
void gemm_omp(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
              std::size_t k, std::span<const double> a,
              std::span<const double> b, std::span<double> c);
// Picks the OpenMP variant above a work threshold.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, std::span<const double> a, std::span<const double> b,
          std::span<double> c);

// ---------------------------------------------------------------------------
// Selective scan over a diagonal state-space system.
//
//   h[t,d,n] = exp(delta[t,d] * A[d,n]) * h[t-1,d,n] + bbar(t,d,n) * u[t,d]
//   y[t,d]   = sum_n C[t,n] * h[t,d,n]
//
// with bbar = delta * phi(delta * A) * B[t,n] under zero-order hold
// (phi(z) = (e^z - 1) / z) and bbar = delta * B[t,n] under Euler.

enum class Discretization { zoh, euler };

struct ScanDims {
  std::size_t length = 0;    // L
  std::size_t channels = 0;  // D
  std::size_t state = 0;     // N
};

struct ScanInputs {
  std::span<const double> u;      // [L x D]
  std::span<const double> delta;  // [L x D]
  std::span<const double> a;      // [D x N]
  std::span<const double> b;      // [L x N]
  std::span<const double> c;      // [L x N]
};

// Gradient sinks; kernels accumulate into them (+=).
struct ScanGrads {
  std::span<double> u;
  std::span<double> delta;
  std::span<double> a;
  std::span<double> b;
  std::span<double> c;
};

// states receives h laid out [D x L x N].
void scan_forward_serial(ScanDims dims, const ScanInputs& in, Discretization mode,
                         std::span<double> y, std::span<double> states);
void scan_forward_omp(ScanDims dims, const ScanInputs& in, Discretization mode,
                      std::span<double> y, std::span<double> states);
void scan_forward(ScanDims dims, const ScanInputs& in, Discretization mode,
                  std::span<double> y, std::span<double> states);

void scan_backward_serial(ScanDims dims, const ScanInputs& in,
                          Discretization mode, std::span<const double> states,
                          std::span<const double> grad_y, const ScanGrads& out);
void scan_backward_omp(ScanDims dims, const ScanInputs& in, Discretization mode,
                       std::span<const double> states,
                       std::span<const double> grad_y, const ScanGrads& out);
void scan_backward(ScanDims dims, const ScanInputs& in, Discretization mode,
                   std::span<const double> states, std::span<const double> grad_y,
                   const ScanGrads& out);

// phi(z) = (e^z - 1) / z and its derivative, with a series branch near 0.
inline double zoh_phi(double z) {
  if (std::abs(z) < 1e-3) return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0));
  return std::expm1(z) / z;
}

inline double zoh_phi_prime(double z) {
  if (std::abs(z) < 1e-3) return 0.5 + z * (1.0 / 3.0 + z * (0.125 + z / 30.0));
  return (std::exp(z) - std::expm1(z) / z) / z;
}

// ---------------------------------------------------------------------------
// All-pairs cosine similarity between rows of A [na x k] and rows of B [nb x k].
// out is [na x nb]. Zero-norm rows yield NaN; callers validate norms first.

void pairwise_cosine_serial(std::span<const double> a, std::size_t na,
                            std::span<const double> b, std::size_t nb,
                            std::size_t k, std::span<double> out);
void pairwise_cosine_omp(std::span<const double> a, std::size_t na,
                         std::span<const double> b, std::size_t nb,
                         std::size_t k, std::span<double> out);
void pairwise_cosine(std::span<const double> a, std::size_t na,
                     std::span<const double> b, std::size_t nb, std::size_t k,
                     std::span<double> out);

// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace dbm::kernels
