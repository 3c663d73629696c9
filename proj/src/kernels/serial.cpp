#include <vector>

#include "bodies.hpp"

namespace dbm::kernels {

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, std::span<const double> a,
                 std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    detail::gemm_row(trans_a, trans_b, i, m, n, k, a.data(), b.data(), c.data());
}

void scan_forward_serial(ScanDims dims, const ScanInputs& in, Discretization mode,
                         std::span<double> y, std::span<double> states) {
  std::vector<double> h(dims.state);
  for (std::size_t d = 0; d < dims.channels; ++d)
    detail::scan_forward_channel(dims, in, mode, d, y.data(), states.data(),
                                 h.data());
}

void scan_backward_serial(ScanDims dims, const ScanInputs& in,
                          Discretization mode, std::span<const double> states,
                          std::span<const double> grad_y, const ScanGrads& out) {
  const std::size_t L = dims.length, D = dims.channels, N = dims.state;
  std::vector<double> db_part(D * L * N), dc_part(D * L * N), gh(N);
  for (std::size_t d = 0; d < D; ++d)
    detail::scan_backward_channel(dims, in, mode, d, states.data(),
                                  grad_y.data(), out, db_part.data() + d * L * N,
                                  dc_part.data() + d * L * N, gh.data());
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = 0; i < L * N; ++i) {
      out.b[i] += db_part[d * L * N + i];
      out.c[i] += dc_part[d * L * N + i];
    }
  }
}

void pairwise_cosine_serial(std::span<const double> a, std::size_t na,
                            std::span<const double> b, std::size_t nb,
                            std::size_t k, std::span<double> out) {
  std::vector<double> norm_a(na), norm_b(nb);
  for (std::size_t i = 0; i < na; ++i) norm_a[i] = detail::squared_norm(a.data() + i * k, k);
  for (std::size_t j = 0; j < nb; ++j) norm_b[j] = detail::squared_norm(b.data() + j * k, k);
  for (std::size_t i = 0; i < na; ++i)
    detail::cosine_row(i, a.data(), norm_a.data(), b.data(), norm_b.data(), nb, k,
                       out.data());
}

}  // namespace dbm::kernels
