#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lobit/errors.hpp"
#include "lobit/intq.hpp"
#include "lobit/matrix.hpp"
#include "lobit/metrics.hpp"
#include "lobit/seq.hpp"
#include "lobit/sherry.hpp"

namespace lobit {

enum class Codec : uint8_t {
  F32Raw = 0,
  Sherry125 = 1,
  Seq2 = 2,
  Int4 = 3,
  Int8 = 4,
};

enum class ScaleMode : uint8_t { AbsMax = 0, MseGrid = 1 };

inline const char* codec_name(Codec c) {
  switch (c) {
    case Codec::F32Raw: return "f32raw";
    case Codec::Sherry125: return "sherry125";
    case Codec::Seq2: return "seq2";
    case Codec::Int4: return "int4";
    case Codec::Int8: return "int8";
  }
  throw std::invalid_argument("codec_name: unknown codec");
}

// Largest magnitude the codec can represent at unit scale.
inline float codec_level_max(Codec c) {
  switch (c) {
    case Codec::Sherry125: return 1.0f;
    case Codec::Seq2: return 1.5f;
    case Codec::Int4: return 7.0f;
    case Codec::Int8: return 127.0f;
    default: throw std::invalid_argument("codec_level_max: codec has no level set");
  }
}

// Group sizes must be a multiple of the codec's packing granule.
inline uint32_t codec_group_multiple(Codec c) {
  switch (c) {
    case Codec::Sherry125: return uint32_t(kSherrySuperblockWeights);
    case Codec::Seq2: return 4;
    case Codec::Int4: return 2;
    case Codec::Int8: return 1;
    default: throw std::invalid_argument("codec_group_multiple: codec is not grouped");
  }
}

inline size_t packed_row_bytes(Codec c, uint32_t cols) {
  switch (c) {
    case Codec::F32Raw: return size_t(cols) * 4;
    case Codec::Sherry125: return sherry_packed_bytes(cols / 4);
    case Codec::Seq2: return seq_packed_bytes(cols);
    case Codec::Int4: return int_packed_bytes(cols, 4);
    case Codec::Int8: return int_packed_bytes(cols, 8);
  }
  throw std::invalid_argument("packed_row_bytes: unknown codec");
}

// Weights-per-scale group (along rows) plus the scale selection rule.
struct QuantSpec {
  Codec codec = Codec::Sherry125;
  uint32_t group_size = 128;
  ScaleMode scale_mode = ScaleMode::MseGrid;
};

inline void validate_spec(const QuantSpec& spec, uint32_t cols) {
  if (spec.codec == Codec::F32Raw) {
    if (spec.group_size != 0) {
      throw std::invalid_argument("QuantSpec: f32raw requires group_size 0");
    }
    return;
  }
  if (spec.group_size == 0 || cols % spec.group_size != 0) {
    throw std::invalid_argument("QuantSpec: group_size must divide cols");
  }
  if (spec.group_size % codec_group_multiple(spec.codec) != 0) {
    throw std::invalid_argument("QuantSpec: group_size not a multiple of " +
                                std::to_string(codec_group_multiple(spec.codec)) +
                                " for codec " + codec_name(spec.codec));
  }
}

// Packed tensor: one positive float32 scale per group (row-major group
// order) and bit-packed codes with rows stored consecutively.
struct QuantizedTensor {
  QuantSpec spec;
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> scales;
  std::vector<uint8_t> codes;

  size_t weight_count() const { return size_t(rows) * cols; }
  size_t group_count() const {
    return spec.codec == Codec::F32Raw ? 0 : size_t(rows) * (cols / spec.group_size);
  }
};

inline void validate_tensor(const QuantizedTensor& qt) {
  if (qt.rows == 0 || qt.cols == 0) {
    throw FormatError("QuantizedTensor: empty shape");
  }
  validate_spec(qt.spec, qt.cols);
  if (qt.scales.size() != qt.group_count()) {
    throw FormatError("QuantizedTensor: scales length mismatch");
  }
  for (float s : qt.scales) {
    if (!(s > 0.0f) || !std::isfinite(s)) {
      throw FormatError("QuantizedTensor: scale must be positive and finite");
    }
  }
  if (qt.codes.size() != size_t(qt.rows) * packed_row_bytes(qt.spec.codec, qt.cols)) {
    throw FormatError("QuantizedTensor: codes length mismatch");
  }
}

// max|w| / level_max; an all-zero group falls back to scale 1.
inline float scale_absmax(std::span<const float> group, Codec codec) {
  if (group.empty()) {
    throw std::invalid_argument("scale_absmax: empty group");
  }
  float amax = 0.0f;
  for (float w : group) amax = std::max(amax, std::fabs(w));
  if (amax == 0.0f) return 1.0f;
  return amax / codec_level_max(codec);
}

// Sum of squared errors when the group is quantized at scale s.
inline double group_sq_error(std::span<const float> group, Codec codec, float s) {
  double err = 0.0;
  switch (codec) {
    case Codec::Sherry125:
      for (size_t b = 0; b + 4 <= group.size(); b += 4) {
        const auto code = sherry_quantize_block(group.subspan(b).first<4>(), s);
        const auto vals = sherry_dequantize_block(code, s);
        for (size_t i = 0; i < 4; ++i) {
          const double d = double(group[b + i]) - double(vals[i]);
          err += d * d;
        }
      }
      break;
    case Codec::Seq2:
      for (float w : group) {
        const double d = double(w) - double(seq_dequantize(seq_quantize(w, s), s));
        err += d * d;
      }
      break;
    case Codec::Int4:
    case Codec::Int8: {
      const int bits = codec == Codec::Int4 ? 4 : 8;
      for (float w : group) {
        const double d = double(w) - double(int_dequantize(int_quantize(w, s, bits), s));
        err += d * d;
      }
      break;
    }
    default:
      throw std::invalid_argument("group_sq_error: codec has no quantizer");
  }
  return err;
}

// Grid search over 101 multipliers of the absmax scale in [0.20, 1.20];
// returns the first (smallest) scale attaining the minimum error. The grid
// contains m = 1.0, so the result is never worse than absmax.
inline float scale_mse(std::span<const float> group, Codec codec) {
  const float base = scale_absmax(group, codec);
  float best_s = 0.0f;
  double best_err = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const float s = float((0.20 + 0.01 * i) * double(base));
    const double err = group_sq_error(group, codec, s);
    if (i == 0 || err < best_err) {
      best_err = err;
      best_s = s;
    }
  }
  return best_s;
}

inline float select_scale(std::span<const float> group, Codec codec, ScaleMode mode) {
  return mode == ScaleMode::AbsMax ? scale_absmax(group, codec)
                                   : scale_mse(group, codec);
}

// Row-sequential group quantization; bitwise deterministic for fixed input.
inline QuantizedTensor quantize_tensor(const Matrix& m, const QuantSpec& spec) {
  validate_spec(spec, uint32_t(m.cols()));
  QuantizedTensor qt;
  qt.spec = spec;
  qt.rows = uint32_t(m.rows());
  qt.cols = uint32_t(m.cols());

  if (spec.codec == Codec::F32Raw) {
    qt.codes.resize(m.size() * 4);
    std::memcpy(qt.codes.data(), m.data().data(), qt.codes.size());
    return qt;
  }

  const uint32_t groups_per_row = qt.cols / spec.group_size;
  qt.scales.reserve(size_t(qt.rows) * groups_per_row);
  qt.codes.reserve(size_t(qt.rows) * packed_row_bytes(spec.codec, qt.cols));

  std::vector<SherryBlockCode> sherry_codes;
  std::vector<uint8_t> seq_codes;
  std::vector<int> int_codes;

  for (size_t r = 0; r < m.rows(); ++r) {
    const std::span<const float> row = m.row(r);
    sherry_codes.clear();
    seq_codes.clear();
    int_codes.clear();
    for (uint32_t g = 0; g < groups_per_row; ++g) {
      const auto group = row.subspan(size_t(g) * spec.group_size, spec.group_size);
      const float s = select_scale(group, spec.codec, spec.scale_mode);
      qt.scales.push_back(s);
      switch (spec.codec) {
        case Codec::Sherry125:
          for (size_t b = 0; b + 4 <= group.size(); b += 4) {
            sherry_codes.push_back(sherry_quantize_block(group.subspan(b).first<4>(), s));
          }
          break;
        case Codec::Seq2:
          for (float w : group) seq_codes.push_back(seq_quantize(w, s));
          break;
        case Codec::Int4:
          for (float w : group) int_codes.push_back(int_quantize(w, s, 4));
          break;
        case Codec::Int8:
          for (float w : group) int_codes.push_back(int_quantize(w, s, 8));
          break;
        default: break;
      }
    }
    std::vector<uint8_t> row_bytes;
    switch (spec.codec) {
      case Codec::Sherry125: row_bytes = sherry_pack(sherry_codes); break;
      case Codec::Seq2: row_bytes = seq_pack(seq_codes); break;
      case Codec::Int4: row_bytes = int_pack(int_codes, 4); break;
      case Codec::Int8: row_bytes = int_pack(int_codes, 8); break;
      default: break;
    }
    qt.codes.insert(qt.codes.end(), row_bytes.begin(), row_bytes.end());
  }
  return qt;
}

inline Matrix dequantize_tensor(const QuantizedTensor& qt) {
  validate_tensor(qt);
  std::vector<float> out(qt.weight_count());

  if (qt.spec.codec == Codec::F32Raw) {
    std::memcpy(out.data(), qt.codes.data(), qt.codes.size());
    for (float v : out) {
      if (!std::isfinite(v)) {
        throw FormatError("dequantize_tensor: non-finite f32raw value");
      }
    }
    return Matrix(qt.rows, qt.cols, std::move(out));
  }

  const uint32_t group_size = qt.spec.group_size;
  const uint32_t groups_per_row = qt.cols / group_size;
  const size_t row_bytes = packed_row_bytes(qt.spec.codec, qt.cols);

  for (uint32_t r = 0; r < qt.rows; ++r) {
    const std::span<const uint8_t> row_codes(qt.codes.data() + size_t(r) * row_bytes,
                                             row_bytes);
    const float* row_scales = qt.scales.data() + size_t(r) * groups_per_row;
    float* dst = out.data() + size_t(r) * qt.cols;
    switch (qt.spec.codec) {
      case Codec::Sherry125: {
        const auto codes = sherry_unpack(row_codes, qt.cols / 4);
        for (size_t b = 0; b < codes.size(); ++b) {
          const float s = row_scales[b * 4 / group_size];
          const auto vals = sherry_dequantize_block(codes[b], s);
          for (size_t i = 0; i < 4; ++i) dst[b * 4 + i] = vals[i];
        }
        break;
      }
      case Codec::Seq2: {
        const auto codes = seq_unpack(row_codes, qt.cols);
        for (size_t j = 0; j < codes.size(); ++j) {
          dst[j] = seq_dequantize(codes[j], row_scales[j / group_size]);
        }
        break;
      }
      case Codec::Int4:
      case Codec::Int8: {
        const int bits = qt.spec.codec == Codec::Int4 ? 4 : 8;
        const auto codes = int_unpack(row_codes, qt.cols, bits);
        for (size_t j = 0; j < codes.size(); ++j) {
          dst[j] = int_dequantize(codes[j], row_scales[j / group_size]);
        }
        break;
      }
      default: break;
    }
  }
  return Matrix(qt.rows, qt.cols, std::move(out));
}

// Total stored payload: packed code bits plus 32 bits per scale.
inline uint64_t stored_bits(const QuantizedTensor& qt) {
  return uint64_t(qt.codes.size()) * 8 + uint64_t(qt.scales.size()) * 32;
}

inline ErrorMetrics error_report(const Matrix& m, const QuantizedTensor& qt) {
  if (m.rows() != qt.rows || m.cols() != qt.cols) {
    throw std::invalid_argument("error_report: shape mismatch");
  }
  return compare(m, dequantize_tensor(qt), stored_bits(qt));
}

}  // namespace lobit
