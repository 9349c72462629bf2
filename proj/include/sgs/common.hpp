#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace sgs {

// Data or file problem (bad manifest, unreadable checkpoint, dimension
// mismatch in external inputs). CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failure that survives the built-in guards (non-finite gradients
// after clipping, failed gradient check). CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Inverse of sigmoid; p must lie strictly inside (0, 1).
inline double inverse_sigmoid(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace sgs
