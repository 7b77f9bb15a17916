#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "lobit/errors.hpp"

namespace lobit {

// 2-bit codec over the stretched half-integer levels {-1.5, -0.5, +0.5, +1.5}.
// The level set has no zero, so w = 0 quantizes to +0.5*s.

inline constexpr float seq_level(uint8_t code) { return float(code) - 1.5f; }

// Nearest-level rounding; exact midpoints (w/s integral in [-1, 1]) go up.
inline uint8_t seq_quantize(float w, float s) {
  if (!(s > 0.0f) || !std::isfinite(s)) {
    throw std::invalid_argument("seq_quantize: scale must be positive");
  }
  if (!std::isfinite(w)) {
    throw std::invalid_argument("seq_quantize: non-finite weight");
  }
  const double code = std::floor(double(w) / double(s)) + 2.0;
  if (code < 0.0) return 0;
  if (code > 3.0) return 3;
  return uint8_t(code);
}

inline float seq_dequantize(uint8_t code, float s) {
  if (code > 3) {
    throw std::invalid_argument("seq_dequantize: code out of range");
  }
  if (!(s > 0.0f) || !std::isfinite(s)) {
    throw std::invalid_argument("seq_dequantize: scale must be positive");
  }
  return seq_level(code) * s;
}

inline constexpr size_t seq_packed_bytes(size_t n_codes) { return (n_codes + 3) / 4; }

// 4 codes per byte, lowest code in the least-significant bit pair.
inline std::vector<uint8_t> seq_pack(std::span<const uint8_t> codes) {
  std::vector<uint8_t> out(seq_packed_bytes(codes.size()), 0);
  for (size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > 3) throw std::invalid_argument("seq_pack: code out of range");
    out[i / 4] |= uint8_t((codes[i] & 3u) << (2 * (i % 4)));
  }
  return out;
}

inline std::vector<uint8_t> seq_unpack(std::span<const uint8_t> bytes, size_t n_codes) {
  if (bytes.size() < seq_packed_bytes(n_codes)) {
    throw FormatError("seq_unpack: insufficient bytes");
  }
  std::vector<uint8_t> out(n_codes);
  for (size_t i = 0; i < n_codes; ++i) {
    out[i] = uint8_t(bytes[i / 4] >> (2 * (i % 4)) & 3u);
  }
  return out;
}

}  // namespace lobit
