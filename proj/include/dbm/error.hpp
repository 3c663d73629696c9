#pragma once

#include <stdexcept>
#include <string>

namespace dbm {

// Shape or dimension contract violated by a caller.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced somewhere in a forward or backward pass.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration (unknown key, invalid variant, out-of-range value).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input data: files, label streams, detections, feature vectors.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dbm
