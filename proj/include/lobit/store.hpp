#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lobit/calib.hpp"
#include "lobit/errors.hpp"
#include "lobit/matrix.hpp"

namespace lobit {

// Bit-exact checkpoint formats, all integers little-endian, no padding.
//
//   RWF1: raw dense float32 tensors
//     "RWF1" | u32 version=1 | u32 count
//     per tensor: u16 name_len | name | u32 rows | u32 cols | rows*cols f32
//
//   TQF1: quantized tensors
//     "TQF1" | u32 version=1 | u32 count
//     per tensor: u16 name_len | name | u8 codec_id | u8 scale_dtype=0 |
//                 u16 reserved=0 | u32 rows | u32 cols | u32 group_size |
//                 u64 scales_len_bytes | u64 codes_len_bytes | scales | codes
//
// Writers build the full byte image before returning; readers bounds-check
// every field and throw FormatError naming the offset.

namespace detail {

class ByteWriter {
 public:
  void u8(uint8_t v) { out_.push_back(v); }
  void u16(uint16_t v) {
    out_.push_back(uint8_t(v));
    out_.push_back(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(uint8_t(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(uint8_t(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void bytes(std::span<const uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
  }
  void text(const std::string& s) {
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    const auto b = take(2);
    return uint16_t(b[0] | uint32_t(b[1]) << 8);
  }
  uint32_t u32() {
    const auto b = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    const auto b = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::span<const uint8_t> take(size_t n) {
    if (remaining() < n) {
      throw FormatError("truncated file: need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_));
    }
    const auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string text(size_t n) {
    const auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  void expect_end() {
    if (remaining() != 0) {
      throw FormatError("trailing bytes at offset " + std::to_string(pos_));
    }
  }

 private:
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

inline void check_magic(ByteReader& r, const char expected[4]) {
  const size_t at = r.offset();
  const auto m = r.take(4);
  if (std::memcmp(m.data(), expected, 4) != 0) {
    throw FormatError(std::string("bad magic at offset ") + std::to_string(at) +
                      ", expected " + expected);
  }
  const size_t vat = r.offset();
  const uint32_t version = r.u32();
  if (version != 1) {
    throw FormatError("unsupported version " + std::to_string(version) +
                      " at offset " + std::to_string(vat));
  }
}

inline std::string read_name(ByteReader& r, std::set<std::string>& seen) {
  const uint16_t len = r.u16();
  std::string name = r.text(len);
  if (!seen.insert(name).second) {
    throw FormatError("duplicate tensor name '" + name + "'");
  }
  return name;
}

inline void check_write_names(auto const& tensors) {
  std::set<std::string> seen;
  for (const auto& [name, payload] : tensors) {
    if (name.size() > std::numeric_limits<uint16_t>::max()) {
      throw std::invalid_argument("tensor name too long: " + name.substr(0, 32));
    }
    if (!seen.insert(name).second) {
      throw std::invalid_argument("duplicate tensor name: " + name);
    }
  }
}

}  // namespace detail

using NamedMatrix = std::pair<std::string, Matrix>;
using NamedQuantizedTensor = std::pair<std::string, QuantizedTensor>;

inline std::vector<uint8_t> write_rwf(std::span<const NamedMatrix> tensors) {
  detail::check_write_names(tensors);
  detail::ByteWriter w;
  w.text("RWF1");
  w.u32(1);
  w.u32(uint32_t(tensors.size()));
  for (const auto& [name, m] : tensors) {
    w.u16(uint16_t(name.size()));
    w.text(name);
    w.u32(uint32_t(m.rows()));
    w.u32(uint32_t(m.cols()));
    for (float v : m.data()) w.f32(v);
  }
  return w.take();
}

inline std::vector<NamedMatrix> read_rwf(std::span<const uint8_t> bytes) {
  detail::ByteReader r(bytes);
  detail::check_magic(r, "RWF1");
  const uint32_t count = r.u32();
  std::vector<NamedMatrix> out;
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = detail::read_name(r, seen);
    const size_t shape_at = r.offset();
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) {
      throw FormatError("tensor '" + name + "': zero dimension at offset " +
                        std::to_string(shape_at));
    }
    const uint64_t n = uint64_t(rows) * cols;
    if (n > r.remaining() / 4) {
      throw FormatError("tensor '" + name + "': data truncated at offset " +
                        std::to_string(r.offset()));
    }
    std::vector<float> data(n);
    const size_t data_at = r.offset();
    const auto raw = r.take(n * 4);
    std::memcpy(data.data(), raw.data(), n * 4);
    for (size_t j = 0; j < data.size(); ++j) {
      if (!std::isfinite(data[j])) {
        throw FormatError("tensor '" + name + "': non-finite value at offset " +
                          std::to_string(data_at + j * 4));
      }
    }
    out.emplace_back(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  r.expect_end();
  return out;
}

inline std::vector<uint8_t> write_tqf(std::span<const NamedQuantizedTensor> tensors) {
  detail::check_write_names(tensors);
  for (const auto& [name, qt] : tensors) {
    try {
      validate_tensor(qt);
    } catch (const FormatError& e) {
      throw std::invalid_argument("tensor '" + name + "': " + e.what());
    }
  }
  detail::ByteWriter w;
  w.text("TQF1");
  w.u32(1);
  w.u32(uint32_t(tensors.size()));
  for (const auto& [name, qt] : tensors) {
    w.u16(uint16_t(name.size()));
    w.text(name);
    w.u8(uint8_t(qt.spec.codec));
    w.u8(0);   // scale_dtype: float32
    w.u16(0);  // reserved
    w.u32(qt.rows);
    w.u32(qt.cols);
    w.u32(qt.spec.codec == Codec::F32Raw ? 0 : qt.spec.group_size);
    w.u64(uint64_t(qt.scales.size()) * 4);
    w.u64(uint64_t(qt.codes.size()));
    for (float s : qt.scales) w.f32(s);
    w.bytes(qt.codes);
  }
  return w.take();
}

inline std::vector<NamedQuantizedTensor> read_tqf(std::span<const uint8_t> bytes) {
  detail::ByteReader r(bytes);
  detail::check_magic(r, "TQF1");
  const uint32_t count = r.u32();
  std::vector<NamedQuantizedTensor> out;
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = detail::read_name(r, seen);
    auto fail = [&](const std::string& field, const std::string& what) {
      throw FormatError("tensor '" + name + "': " + field + " " + what +
                        " near offset " + std::to_string(r.offset()));
    };

    const uint8_t codec_id = r.u8();
    if (codec_id > uint8_t(Codec::Int8)) fail("codec_id", "unknown: " + std::to_string(codec_id));
    const Codec codec = Codec(codec_id);
    const uint8_t scale_dtype = r.u8();
    if (scale_dtype != 0) fail("scale_dtype", "unsupported: " + std::to_string(scale_dtype));
    const uint16_t reserved = r.u16();
    if (reserved != 0) fail("reserved", "must be zero");
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    const uint32_t group_size = r.u32();
    const uint64_t scales_len = r.u64();
    const uint64_t codes_len = r.u64();

    if (rows == 0 || cols == 0) fail("shape", "has zero dimension");

    QuantizedTensor qt;
    qt.spec.codec = codec;
    qt.spec.group_size = group_size;
    qt.rows = rows;
    qt.cols = cols;
    try {
      validate_spec(qt.spec, cols);
    } catch (const std::invalid_argument& e) {
      fail("group_size", e.what());
    }

    const uint64_t want_scales = uint64_t(qt.group_count()) * 4;
    if (scales_len != want_scales) {
      fail("scales_len_bytes", "expected " + std::to_string(want_scales) + ", got " +
                                   std::to_string(scales_len));
    }
    const uint64_t want_codes = uint64_t(rows) * packed_row_bytes(codec, cols);
    if (codes_len != want_codes) {
      fail("codes_len_bytes", "expected " + std::to_string(want_codes) + ", got " +
                                  std::to_string(codes_len));
    }
    if (scales_len > r.remaining() || codes_len > r.remaining() - scales_len) {
      fail("payload", "truncated");
    }

    qt.scales.resize(scales_len / 4);
    const size_t scales_at = r.offset();
    const auto scale_bytes = r.take(scales_len);
    std::memcpy(qt.scales.data(), scale_bytes.data(), scales_len);
    for (size_t j = 0; j < qt.scales.size(); ++j) {
      if (!(qt.scales[j] > 0.0f) || !std::isfinite(qt.scales[j])) {
        throw FormatError("tensor '" + name + "': scale not positive at offset " +
                          std::to_string(scales_at + j * 4));
      }
    }
    const auto code_bytes = r.take(codes_len);
    qt.codes.assign(code_bytes.begin(), code_bytes.end());
    if (codec == Codec::F32Raw) {
      for (size_t j = 0; j + 4 <= qt.codes.size(); j += 4) {
        float v;
        std::memcpy(&v, qt.codes.data() + j, 4);
        if (!std::isfinite(v)) {
          throw FormatError("tensor '" + name + "': non-finite f32raw value");
        }
      }
    }
    out.emplace_back(std::move(name), std::move(qt));
  }
  r.expect_end();
  return out;
}

// Human-readable per-tensor summary; detects the format by magic.
inline std::string inspect(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw FormatError("bad magic at offset 0: file shorter than 4 bytes");
  }
  std::ostringstream os;
  char fmt_buf[64];

  if (std::memcmp(bytes.data(), "RWF1", 4) == 0) {
    const auto tensors = read_rwf(bytes);
    os << "RWF1: " << tensors.size() << " tensors\n";
    uint64_t total_weights = 0;
    uint64_t total_bytes = 0;
    for (const auto& [name, m] : tensors) {
      std::snprintf(fmt_buf, sizeof fmt_buf, "%ux%u", unsigned(m.rows()), unsigned(m.cols()));
      os << "  " << name << "  shape=" << fmt_buf << "  codec=f32raw"
         << "  bits_per_weight=32  payload_bytes=" << m.size() * 4 << "\n";
      total_weights += m.size();
      total_bytes += m.size() * 4;
    }
    os << "total: " << total_weights << " weights, " << total_bytes
       << " payload bytes, " << bytes.size() << " file bytes\n";
    return os.str();
  }
  if (std::memcmp(bytes.data(), "TQF1", 4) == 0) {
    const auto tensors = read_tqf(bytes);
    os << "TQF1: " << tensors.size() << " tensors\n";
    uint64_t total_weights = 0;
    uint64_t total_bytes = 0;
    for (const auto& [name, qt] : tensors) {
      const uint64_t payload = qt.scales.size() * 4 + qt.codes.size();
      const double bpw = qt.spec.codec == Codec::F32Raw
                             ? 32.0
                             : double(stored_bits(qt)) / double(qt.weight_count());
      std::snprintf(fmt_buf, sizeof fmt_buf, "%ux%u", qt.rows, qt.cols);
      os << "  " << name << "  shape=" << fmt_buf
         << "  codec=" << codec_name(qt.spec.codec)
         << "  group_size=" << (qt.spec.codec == Codec::F32Raw ? 0 : qt.spec.group_size)
         << "  bits_per_weight=" << bpw << "  payload_bytes=" << payload << "\n";
      total_weights += qt.weight_count();
      total_bytes += payload;
    }
    os << "total: " << total_weights << " weights, " << total_bytes
       << " payload bytes, " << bytes.size() << " file bytes\n";
    return os.str();
  }
  throw FormatError("bad magic at offset 0");
}

}  // namespace lobit
