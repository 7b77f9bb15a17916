#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "lobit/matrix.hpp"

namespace lobit {

// Reconstruction quality of a dequantized tensor against its source.
// sqnr_db is +infinity (printed "inf") for an exact reconstruction.
struct ErrorMetrics {
  double mse = 0.0;
  double max_abs = 0.0;
  double sqnr_db = 0.0;
  double zero_fraction = 0.0;
  double bits_per_weight = 0.0;
};

inline ErrorMetrics compare(const Matrix& original, const Matrix& reconstructed,
                            uint64_t stored_bits) {
  if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
    throw std::invalid_argument("compare: shape mismatch");
  }
  if (stored_bits == 0) {
    throw std::invalid_argument("compare: stored_bits must be positive");
  }
  const size_t n = original.size();
  double err_sq = 0.0;
  double sig_sq = 0.0;
  double max_abs = 0.0;
  size_t zeros = 0;
  for (size_t i = 0; i < n; ++i) {
    const double o = original.data()[i];
    const double r = reconstructed.data()[i];
    const double d = o - r;
    err_sq += d * d;
    sig_sq += o * o;
    max_abs = std::max(max_abs, std::fabs(d));
    if (r == 0.0) ++zeros;
  }
  ErrorMetrics m;
  m.mse = err_sq / double(n);
  m.max_abs = max_abs;
  m.sqnr_db = m.mse == 0.0 ? std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10((sig_sq / double(n)) / m.mse);
  m.zero_fraction = double(zeros) / double(n);
  m.bits_per_weight = double(stored_bits) / double(n);
  return m;
}

}  // namespace lobit
