#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "bodies.hpp"

namespace dbm::kernels {

namespace {

// Below these sizes thread start-up costs more than the work.
constexpr std::size_t kGemmParallelWork = 1u << 16;
constexpr std::size_t kScanParallelWork = 1u << 12;
constexpr std::size_t kCosineParallelWork = 1u << 14;

}  // namespace

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_omp(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
              std::size_t k, std::span<const double> a,
              std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    detail::gemm_row(trans_a, trans_b, static_cast<std::size_t>(i), m, n, k,
                     a.data(), b.data(), c.data());
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  if (m > 1 && m * n * k >= kGemmParallelWork && max_threads() > 1)
    gemm_omp(trans_a, trans_b, m, n, k, a, b, c);
  else
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c);
}

void scan_forward_omp(ScanDims dims, const ScanInputs& in, Discretization mode,
                      std::span<double> y, std::span<double> states) {
  const auto channels = static_cast<std::ptrdiff_t>(dims.channels);
#pragma omp parallel
  {
    std::vector<double> h(dims.state);
#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < channels; ++d)
      detail::scan_forward_channel(dims, in, mode, static_cast<std::size_t>(d),
                                   y.data(), states.data(), h.data());
  }
}

void scan_forward(ScanDims dims, const ScanInputs& in, Discretization mode,
                  std::span<double> y, std::span<double> states) {
  if (dims.length * dims.channels * dims.state >= kScanParallelWork &&
      max_threads() > 1)
    scan_forward_omp(dims, in, mode, y, states);
  else
    scan_forward_serial(dims, in, mode, y, states);
}

void scan_backward_omp(ScanDims dims, const ScanInputs& in, Discretization mode,
                       std::span<const double> states,
                       std::span<const double> grad_y, const ScanGrads& out) {
  const std::size_t L = dims.length, D = dims.channels, N = dims.state;
  std::vector<double> db_part(D * L * N), dc_part(D * L * N);
  const auto channels = static_cast<std::ptrdiff_t>(D);
#pragma omp parallel
  {
    std::vector<double> gh(N);
#pragma omp for schedule(static)
    for (std::ptrdiff_t di = 0; di < channels; ++di) {
      const auto d = static_cast<std::size_t>(di);
      detail::scan_backward_channel(dims, in, mode, d, states.data(),
                                    grad_y.data(), out, db_part.data() + d * L * N,
                                    dc_part.data() + d * L * N, gh.data());
    }
  }
  // channel-ordered reduction keeps results identical to the serial path
  const auto cells = static_cast<std::ptrdiff_t>(L * N);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < cells; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t d = 0; d < D; ++d) {
      out.b[i] += db_part[d * L * N + i];
      out.c[i] += dc_part[d * L * N + i];
    }
  }
}

void scan_backward(ScanDims dims, const ScanInputs& in, Discretization mode,
                   std::span<const double> states, std::span<const double> grad_y,
                   const ScanGrads& out) {
  if (dims.length * dims.channels * dims.state >= kScanParallelWork &&
      max_threads() > 1)
    scan_backward_omp(dims, in, mode, states, grad_y, out);
  else
    scan_backward_serial(dims, in, mode, states, grad_y, out);
}

void pairwise_cosine_omp(std::span<const double> a, std::size_t na,
                         std::span<const double> b, std::size_t nb,
                         std::size_t k, std::span<double> out) {
  std::vector<double> norm_a(na), norm_b(nb);
  for (std::size_t i = 0; i < na; ++i) norm_a[i] = detail::squared_norm(a.data() + i * k, k);
  for (std::size_t j = 0; j < nb; ++j) norm_b[j] = detail::squared_norm(b.data() + j * k, k);
  const auto rows = static_cast<std::ptrdiff_t>(na);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    detail::cosine_row(static_cast<std::size_t>(i), a.data(), norm_a.data(),
                       b.data(), norm_b.data(), nb, k, out.data());
}

void pairwise_cosine(std::span<const double> a, std::size_t na,
                     std::span<const double> b, std::size_t nb, std::size_t k,
                     std::span<double> out) {
  if (na * nb * k >= kCosineParallelWork && max_threads() > 1)
    pairwise_cosine_omp(a, na, b, nb, k, out);
  else
    pairwise_cosine_serial(a, na, b, nb, k, out);
}

}  // namespace dbm::kernels
