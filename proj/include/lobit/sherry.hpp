#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "lobit/errors.hpp"

namespace lobit {

// 1.25-bit sparse-ternary codec. Every 4-weight block decodes to exactly one
// zero and three +/-scale values, so a block fits in 5 bits: a 2-bit zero
// position and one sign bit per surviving weight. 8 blocks (32 weights) pack
// into exactly 5 bytes, the superblock granule used by the matvec kernel.

inline constexpr size_t kSherryBlockWeights = 4;
inline constexpr size_t kSherrySuperblockWeights = 32;
inline constexpr size_t kSherrySuperblockBytes = 5;

struct SherryBlockCode {
  uint8_t zero_idx = 0;  // 0..3, position of the zeroed weight
  uint8_t signs = 0;     // bit k = sign of the k-th surviving position, 1 = +

  // Integer form: (zero_idx << 3) | signs, in 0..31.
  uint8_t to_int() const { return uint8_t((zero_idx << 3) | signs); }

  static SherryBlockCode from_int(uint8_t code) {
    if (code > 31) {
      throw std::invalid_argument("SherryBlockCode: code out of range");
    }
    return {uint8_t(code >> 3), uint8_t(code & 7)};
  }

  bool operator==(const SherryBlockCode&) const = default;
};

// Least-squares optimal block code for a fixed scale: zero the minimum-|w|
// position (lowest index on ties) and keep the signs of the rest, treating
// w == 0 as positive.
inline SherryBlockCode sherry_quantize_block(std::span<const float, 4> w, float s) {
  if (!(s > 0.0f) || !std::isfinite(s)) {
    throw std::invalid_argument("sherry_quantize_block: scale must be positive");
  }
  size_t zero_idx = 0;
  for (size_t i = 0; i < 4; ++i) {
    if (!std::isfinite(w[i])) {
      throw std::invalid_argument("sherry_quantize_block: non-finite weight");
    }
    if (std::fabs(w[i]) < std::fabs(w[zero_idx])) zero_idx = i;
  }
  uint8_t signs = 0;
  uint8_t bit = 0;
  for (size_t i = 0; i < 4; ++i) {
    if (i == zero_idx) continue;
    if (w[i] >= 0.0f) signs |= uint8_t(1u << bit);
    ++bit;
  }
  return {uint8_t(zero_idx), signs};
}

inline std::array<float, 4> sherry_dequantize_block(SherryBlockCode code, float s) {
  if (!(s > 0.0f) || !std::isfinite(s)) {
    throw std::invalid_argument("sherry_dequantize_block: scale must be positive");
  }
  if (code.zero_idx > 3 || code.signs > 7) {
    throw std::invalid_argument("sherry_dequantize_block: invalid code");
  }
  std::array<float, 4> out{};
  uint8_t bit = 0;
  for (size_t i = 0; i < 4; ++i) {
    if (i == code.zero_idx) {
      out[i] = 0.0f;
    } else {
      out[i] = (code.signs >> bit & 1) ? s : -s;
      ++bit;
    }
  }
  return out;
}

inline constexpr size_t sherry_packed_bytes(size_t n_blocks) {
  return (n_blocks * 5 + 7) / 8;
}

// LSB-first bitstream: bit j of code k lands at stream bit 5k+j.
inline std::vector<uint8_t> sherry_pack(std::span<const SherryBlockCode> codes) {
  std::vector<uint8_t> out;
  out.reserve(sherry_packed_bytes(codes.size()));
  uint32_t acc = 0;
  int nbits = 0;
  for (const SherryBlockCode& c : codes) {
    acc |= uint32_t(c.to_int()) << nbits;
    nbits += 5;
    while (nbits >= 8) {
      out.push_back(uint8_t(acc & 0xFF));
      acc >>= 8;
      nbits -= 8;
    }
  }
  if (nbits > 0) out.push_back(uint8_t(acc & 0xFF));
  return out;
}

inline std::vector<SherryBlockCode> sherry_unpack(std::span<const uint8_t> bytes,
                                                  size_t n_blocks) {
  if (bytes.size() < sherry_packed_bytes(n_blocks)) {
    throw FormatError("sherry_unpack: insufficient bytes");
  }
  std::vector<SherryBlockCode> out;
  out.reserve(n_blocks);
  uint32_t acc = 0;
  int nbits = 0;
  size_t pos = 0;
  for (size_t k = 0; k < n_blocks; ++k) {
    while (nbits < 5) {
      acc |= uint32_t(bytes[pos++]) << nbits;
      nbits += 8;
    }
    out.push_back(SherryBlockCode::from_int(uint8_t(acc & 31)));
    acc >>= 5;
    nbits -= 5;
  }
  return out;
}

}  // namespace lobit
