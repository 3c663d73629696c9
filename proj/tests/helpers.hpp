#pragma once

#include <random>
#include <vector>

#include "dbm/ops.hpp"

namespace testing {

inline std::vector<double> randn(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline dbm::Tensor param(dbm::Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  auto n = dbm::shape_numel(shape);
  return dbm::Tensor::variable(std::move(shape), randn(n, rng, sd));
}

// sum(x * w) with fixed random weights, so every output element matters.
inline dbm::Tensor weighted_sum(const dbm::Tensor& x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = dbm::Tensor::from(x.shape(), randn(x.numel(), rng));
  return dbm::sum(dbm::mul(x, w));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing
