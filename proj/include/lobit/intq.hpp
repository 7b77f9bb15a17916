#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "lobit/errors.hpp"

namespace lobit {

// Symmetric 4/8-bit codecs. Codes live in [-(2^(b-1)-1), +(2^(b-1)-1)]; the
// most negative two's-complement point is excluded so zero stays exactly
// representable and the range is sign-symmetric. Storage is offset-binary
// (code + 2^(b-1)): nibble pairs low-first for 4-bit, one byte per code for
// 8-bit.

inline int int_max_code(int bits) {
  if (bits != 4 && bits != 8) {
    throw std::invalid_argument("int codec: bits must be 4 or 8");
  }
  return (1 << (bits - 1)) - 1;
}

// Round-to-nearest with halves away from zero, clamped to the symmetric range.
inline int int_quantize(float w, float s, int bits) {
  const int max_code = int_max_code(bits);
  if (!(s > 0.0f) || !std::isfinite(s)) {
    throw std::invalid_argument("int_quantize: scale must be positive");
  }
  if (!std::isfinite(w)) {
    throw std::invalid_argument("int_quantize: non-finite weight");
  }
  const double q = std::round(double(w) / double(s));
  if (q < -max_code) return -max_code;
  if (q > max_code) return max_code;
  return int(q);
}

inline float int_dequantize(int code, float s) {
  if (!(s > 0.0f) || !std::isfinite(s)) {
    throw std::invalid_argument("int_dequantize: scale must be positive");
  }
  return float(code) * s;
}

inline uint8_t int_code_store(int code, int bits) {
  const int max_code = int_max_code(bits);
  if (code < -max_code || code > max_code) {
    throw std::invalid_argument("int_code_store: code out of range");
  }
  return uint8_t(code + (1 << (bits - 1)));
}

// The offset-binary zero point (stored 0 = the excluded most-negative code)
// is never written by the quantizer; clamp it on load so adversarial bytes
// still decode inside the symmetric range.
inline int int_code_load(uint8_t stored, int bits) {
  const int max_code = int_max_code(bits);
  if (bits == 4 && stored > 15) {
    throw FormatError("int_code_load: stored nibble out of range");
  }
  const int code = int(stored) - (1 << (bits - 1));
  return code < -max_code ? -max_code : code;
}

inline size_t int_packed_bytes(size_t n_codes, int bits) {
  return bits == 4 ? (n_codes + 1) / 2 : n_codes;
}

inline std::vector<uint8_t> int_pack(std::span<const int> codes, int bits) {
  int_max_code(bits);
  std::vector<uint8_t> out(int_packed_bytes(codes.size(), bits), 0);
  if (bits == 8) {
    for (size_t i = 0; i < codes.size(); ++i) out[i] = int_code_store(codes[i], 8);
  } else {
    for (size_t i = 0; i < codes.size(); ++i) {
      out[i / 2] |= uint8_t(int_code_store(codes[i], 4) << (4 * (i % 2)));
    }
  }
  return out;
}

inline std::vector<int> int_unpack(std::span<const uint8_t> bytes, size_t n_codes,
                                   int bits) {
  int_max_code(bits);
  if (bytes.size() < int_packed_bytes(n_codes, bits)) {
    throw FormatError("int_unpack: insufficient bytes");
  }
  std::vector<int> out(n_codes);
  if (bits == 8) {
    for (size_t i = 0; i < n_codes; ++i) out[i] = int_code_load(bytes[i], 8);
  } else {
    for (size_t i = 0; i < n_codes; ++i) {
      out[i] = int_code_load(uint8_t(bytes[i / 2] >> (4 * (i % 2)) & 0xF), 4);
    }
  }
  return out;
}

}  // namespace lobit
