#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "lobit/calib.hpp"
#include "lobit/matrix.hpp"
#include "lobit/rng.hpp"

namespace lobit {

// Reference kernel and canonical accumulation order: one double accumulator
// per row, columns ascending.
inline std::vector<float> matvec_dense(const Matrix& m, std::span<const float> x) {
  if (x.size() != m.cols()) {
    throw std::invalid_argument("matvec_dense: x length must equal cols");
  }
  std::vector<float> y(m.rows());
  for (size_t r = 0; r < m.rows(); ++r) {
    const std::span<const float> row = m.row(r);
    double acc = 0.0;
    for (size_t j = 0; j < row.size(); ++j) acc += double(row[j]) * double(x[j]);
    y[r] = float(acc);
  }
  return y;
}

namespace detail {

// Sign-add kernel: three adds/subs per block, the zero position skipped.
// Scales multiply once per group, so multiplies per row = group count.
inline double sherry_group_acc(const uint8_t* code_bytes, const float* x,
                               uint32_t group_size) {
  double acc = 0.0;
  for (uint32_t sb = 0; sb < group_size; sb += kSherrySuperblockWeights) {
    uint64_t bits = 0;
    for (size_t i = 0; i < kSherrySuperblockBytes; ++i) {
      bits |= uint64_t(code_bytes[i]) << (8 * i);
    }
    code_bytes += kSherrySuperblockBytes;
    for (size_t b = 0; b < 8; ++b, bits >>= 5) {
      const uint32_t code = uint32_t(bits & 31);
      const uint32_t zero_idx = code >> 3;
      uint32_t signs = code & 7;
      const float* xb = x + sb + b * 4;
      for (uint32_t i = 0; i < 4; ++i) {
        if (i == zero_idx) continue;
        acc += (signs & 1) ? double(xb[i]) : -double(xb[i]);
        signs >>= 1;
      }
    }
  }
  return acc;
}

}  // namespace detail

// Matrix-vector product evaluated directly on the packed codes, group by
// group in double precision. Matches matvec_dense on the dequantized tensor
// to ~1e-5 relative per element.
inline std::vector<float> matvec_packed(const QuantizedTensor& qt,
                                        std::span<const float> x) {
  validate_tensor(qt);
  if (x.size() != qt.cols) {
    throw std::invalid_argument("matvec_packed: x length must equal cols");
  }
  std::vector<float> y(qt.rows);
  const size_t row_bytes = packed_row_bytes(qt.spec.codec, qt.cols);

  if (qt.spec.codec == Codec::F32Raw) {
    for (uint32_t r = 0; r < qt.rows; ++r) {
      const uint8_t* src = qt.codes.data() + size_t(r) * row_bytes;
      double acc = 0.0;
      for (uint32_t j = 0; j < qt.cols; ++j) {
        float w;
        std::memcpy(&w, src + size_t(j) * 4, 4);
        acc += double(w) * double(x[j]);
      }
      y[r] = float(acc);
    }
    return y;
  }

  const uint32_t group_size = qt.spec.group_size;
  const uint32_t groups_per_row = qt.cols / group_size;

  for (uint32_t r = 0; r < qt.rows; ++r) {
    const uint8_t* row_codes = qt.codes.data() + size_t(r) * row_bytes;
    const float* row_scales = qt.scales.data() + size_t(r) * groups_per_row;
    double row_acc = 0.0;

    switch (qt.spec.codec) {
      case Codec::Sherry125: {
        const size_t group_bytes = group_size / kSherrySuperblockWeights *
                                   kSherrySuperblockBytes;
        for (uint32_t g = 0; g < groups_per_row; ++g) {
          const double acc = detail::sherry_group_acc(
              row_codes + size_t(g) * group_bytes, x.data() + size_t(g) * group_size,
              group_size);
          row_acc += acc * double(row_scales[g]);
        }
        break;
      }
      case Codec::Seq2: {
        for (uint32_t g = 0; g < groups_per_row; ++g) {
          const float* xg = x.data() + size_t(g) * group_size;
          double code_acc = 0.0;
          double x_acc = 0.0;
          for (uint32_t j = 0; j < group_size; ++j) {
            const size_t idx = size_t(g) * group_size + j;
            const uint32_t code = row_codes[idx / 4] >> (2 * (idx % 4)) & 3u;
            code_acc += double(code) * double(xg[j]);
            x_acc += double(xg[j]);
          }
          row_acc += (code_acc - 1.5 * x_acc) * double(row_scales[g]);
        }
        break;
      }
      case Codec::Int4: {
        for (uint32_t g = 0; g < groups_per_row; ++g) {
          const float* xg = x.data() + size_t(g) * group_size;
          double acc = 0.0;
          for (uint32_t j = 0; j < group_size; ++j) {
            const size_t idx = size_t(g) * group_size + j;
            const uint8_t stored = uint8_t(row_codes[idx / 2] >> (4 * (idx % 2)) & 0xF);
            acc += double(int_code_load(stored, 4)) * double(xg[j]);
          }
          row_acc += acc * double(row_scales[g]);
        }
        break;
      }
      case Codec::Int8: {
        for (uint32_t g = 0; g < groups_per_row; ++g) {
          const float* xg = x.data() + size_t(g) * group_size;
          double acc = 0.0;
          for (uint32_t j = 0; j < group_size; ++j) {
            acc += double(int_code_load(row_codes[size_t(g) * group_size + j], 8)) *
                   double(xg[j]);
          }
          row_acc += acc * double(row_scales[g]);
        }
        break;
      }
      default: break;
    }
    y[r] = float(row_acc);
  }
  return y;
}

// Structural traffic counters plus median wall time over iters runs on a
// fixed random input.
struct BenchReport {
  double ns_per_matvec = 0.0;
  uint64_t code_bytes_touched = 0;
  double weights_per_second = 0.0;
  double bytes_per_weight_touched = 0.0;
};

inline BenchReport bench_matvec(const QuantizedTensor& qt, int iters, Rng& rng) {
  if (iters < 1) {
    throw std::invalid_argument("bench_matvec: iters must be >= 1");
  }
  validate_tensor(qt);
  std::vector<float> x(qt.cols);
  for (float& v : x) v = float(rng.next_gaussian());

  std::vector<double> times(static_cast<size_t>(iters), 0.0);
  double sink = 0.0;
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = matvec_packed(qt, x);
    const auto t1 = std::chrono::steady_clock::now();
    sink += double(y[0]);
    times[size_t(i)] = double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }
  asm volatile("" : : "r,m"(sink) : "memory");

  std::nth_element(times.begin(), times.begin() + iters / 2, times.end());
  const double median = times[size_t(iters) / 2];

  BenchReport report;
  report.ns_per_matvec = median;
  report.code_bytes_touched = qt.codes.size();
  report.weights_per_second = double(qt.weight_count()) * 1e9 / std::max(median, 1.0);
  report.bytes_per_weight_touched =
      double(qt.codes.size() + qt.scales.size() * 4) / double(qt.weight_count());
  return report;
}

}  // namespace lobit
