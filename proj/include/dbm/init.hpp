#pragma once

#include <random>

#include "dbm/tensor.hpp"

namespace dbm::init {

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng, Precision p);
Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng, Precision p);
Tensor constant(Shape shape, double value, Precision p);

}  // namespace dbm::init
