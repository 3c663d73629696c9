// Serial vs OpenMP timings for the numeric kernels.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <array>
#include <functional>
#include <random>
#include <vector>

#include "dbm/kernels.hpp"

using namespace dbm::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double best_ms(const std::function<void()>& f, int reps = 5) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double omp) {
  std::printf("%-34s serial %9.3f ms   omp %9.3f ms   x%.2f\n", name, serial, omp, serial / omp);
}

}  // namespace

int main() {
  std::printf("threads %d\n", omp_get_max_threads());
  std::mt19937_64 rng(1);

  for (std::size_t n : {64, 256, 512}) {
    auto a = noise(n * n, rng), b = noise(n * n, rng);
    std::vector<double> c(n * n);
    char name[64];
    std::snprintf(name, sizeof name, "gemm %zux%zux%zu", n, n, n);
    report(name, best_ms([&] { gemm_serial(false, false, n, n, n, a, b, c); }),
           best_ms([&] { gemm_omp(false, false, n, n, n, a, b, c); }));
  }

  for (auto [L, D, N] : {std::array<std::size_t, 3>{197, 64, 16}, {1025, 192, 16}}) {
    ScanDims dims{L, D, N};
    auto u = noise(L * D, rng), delta = noise(L * D, rng, 0.001, 0.1), a = noise(D * N, rng, -2, -0.1);
    auto b = noise(L * N, rng), c = noise(L * N, rng);
    ScanInputs in{u, delta, a, b, c};
    std::vector<double> y(L * D), states(D * L * N), gy = noise(L * D, rng);
    std::vector<double> gu(L * D), gd(L * D), ga(D * N), gb(L * N), gc(L * N);
    ScanGrads g{gu, gd, ga, gb, gc};
    char name[64];
    std::snprintf(name, sizeof name, "scan fwd L=%zu D=%zu N=%zu", L, D, N);
    report(name, best_ms([&] { scan_forward_serial(dims, in, Discretization::zoh, y, states); }),
           best_ms([&] { scan_forward_omp(dims, in, Discretization::zoh, y, states); }));
    std::snprintf(name, sizeof name, "scan bwd L=%zu D=%zu N=%zu", L, D, N);
    report(name, best_ms([&] { scan_backward_serial(dims, in, Discretization::zoh, states, gy, g); }),
           best_ms([&] { scan_backward_omp(dims, in, Discretization::zoh, states, gy, g); }));
  }

  {
    const std::size_t na = 2000, nb = 500, k = 256;
    auto a = noise(na * k, rng), b = noise(nb * k, rng);
    std::vector<double> out(na * nb);
    report("cosine 2000x500 k=256", best_ms([&] { pairwise_cosine_serial(a, na, b, nb, k, out); }, 3),
           best_ms([&] { pairwise_cosine_omp(a, na, b, nb, k, out); }, 3));
  }
}
