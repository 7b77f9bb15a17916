#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <vector>

#include "lobit/calib.hpp"
#include "lobit/rng.hpp"
#include "lobit/store.hpp"

using namespace lobit;

namespace {

std::vector<NamedMatrix> random_rwf_tensors(Rng& rng, size_t count) {
  std::vector<NamedMatrix> out;
  for (size_t i = 0; i < count; ++i) {
    const size_t rows = 1 + rng.next_below(6);
    const size_t cols = 1 + rng.next_below(40);
    out.emplace_back("t" + std::to_string(i), gaussian_matrix(rng, rows, cols, 1.0f));
  }
  return out;
}

std::vector<NamedQuantizedTensor> random_tqf_tensors(Rng& rng, size_t count) {
  const Codec codecs[] = {Codec::F32Raw, Codec::Sherry125, Codec::Seq2, Codec::Int4,
                          Codec::Int8};
  std::vector<NamedQuantizedTensor> out;
  for (size_t i = 0; i < count; ++i) {
    const Codec codec = codecs[rng.next_below(5)];
    const uint32_t group = codec == Codec::Sherry125 ? 32 : 8;
    const size_t rows = 1 + rng.next_below(5);
    const size_t cols = codec == Codec::Sherry125 ? 32 * (1 + rng.next_below(3))
                                                  : 8 * (1 + rng.next_below(5));
    const Matrix m = gaussian_matrix(rng, rows, cols, 1.0f);
    const QuantSpec spec{codec, codec == Codec::F32Raw ? 0 : group, ScaleMode::AbsMax};
    out.emplace_back("q" + std::to_string(i), quantize_tensor(m, spec));
  }
  return out;
}

}  // namespace

TEST_CASE("rwf: golden bytes for the empty file") {
  const auto bytes = write_rwf({});
  REQUIRE(bytes == std::vector<uint8_t>{'R', 'W', 'F', '1', 1, 0, 0, 0, 0, 0, 0, 0});
  REQUIRE(bytes.size() == 12);
  REQUIRE(read_rwf(bytes).empty());
}

TEST_CASE("rwf: golden bytes for one 1x1 tensor") {
  const std::vector<NamedMatrix> tensors{{"w", Matrix(1, 1, {1.0f})}};
  const auto bytes = write_rwf(tensors);
  REQUIRE(bytes.size() == 27);
  const std::vector<uint8_t> want{
      'R', 'W', 'F', '1', 1, 0, 0, 0, 1, 0, 0, 0,  // header
      1, 0, 'w',                                   // name
      1, 0, 0, 0, 1, 0, 0, 0,                      // shape
      0x00, 0x00, 0x80, 0x3F,                      // 1.0f little-endian
  };
  REQUIRE(bytes == want);
}

TEST_CASE("rwf: read-write round trip on random files") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tensors = random_rwf_tensors(rng, rng.next_below(5));
    const auto bytes = write_rwf(tensors);
    const auto back = read_rwf(bytes);
    REQUIRE(back.size() == tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
      REQUIRE(back[i].first == tensors[i].first);
      REQUIRE(back[i].second == tensors[i].second);
    }
    REQUIRE(write_rwf(back) == bytes);  // byte-level identity
  }
}

TEST_CASE("rwf: write rejects duplicate names") {
  const std::vector<NamedMatrix> tensors{{"w", Matrix(1, 1, {1.0f})},
                                         {"w", Matrix(1, 1, {2.0f})}};
  REQUIRE_THROWS_AS(write_rwf(tensors), std::invalid_argument);
}

TEST_CASE("tqf: golden arithmetic for a 1x128 sherry tensor") {
  const Matrix m(1, 128, std::vector<float>(128, 1.0f));
  const QuantizedTensor qt = quantize_tensor(m, {Codec::Sherry125, 128, ScaleMode::AbsMax});
  REQUIRE(qt.scales.size() * 4 == 4);
  REQUIRE(qt.codes.size() == 20);
  const auto bytes = write_tqf(std::vector{NamedQuantizedTensor{"w", qt}});
  // 12 header + (2+1) name + 32 fixed metadata + 24 payload
  REQUIRE(bytes.size() == 12 + 3 + 32 + 24);
  REQUIRE(double(stored_bits(qt)) / 128.0 == 1.5);

  const auto back = read_tqf(bytes);
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].first == "w");
  REQUIRE(back[0].second.scales == qt.scales);
  REQUIRE(back[0].second.codes == qt.codes);
  REQUIRE(write_tqf(back) == bytes);
}

TEST_CASE("tqf: round trip across codecs") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto tensors = random_tqf_tensors(rng, 1 + rng.next_below(4));
    const auto bytes = write_tqf(tensors);
    const auto back = read_tqf(bytes);
    REQUIRE(back.size() == tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
      REQUIRE(back[i].first == tensors[i].first);
      REQUIRE(back[i].second.spec.codec == tensors[i].second.spec.codec);
      REQUIRE(back[i].second.scales == tensors[i].second.scales);
      REQUIRE(back[i].second.codes == tensors[i].second.codes);
      if (tensors[i].second.spec.codec != Codec::F32Raw) {
        REQUIRE(back[i].second.spec.group_size == tensors[i].second.spec.group_size);
      }
    }
    REQUIRE(write_tqf(back) == bytes);
  }
}

TEST_CASE("store: corrupted magic names offset 0") {
  auto bytes = write_rwf({});
  bytes[0] = 'X';
  try {
    read_rwf(bytes);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    REQUIRE(std::string(e.what()).find("offset 0") != std::string::npos);
  }
  REQUIRE_THROWS_AS(inspect(bytes), FormatError);
}

TEST_CASE("store: truncation reports a format error with an offset") {
  Rng rng(3);
  const auto tensors = random_rwf_tensors(rng, 2);
  auto bytes = write_rwf(tensors);
  bytes.resize(bytes.size() - 3);
  try {
    read_rwf(bytes);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    REQUIRE(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("tqf: rejects unknown codec, bad lengths, bad scales") {
  const Matrix m(1, 32, std::vector<float>(32, 0.5f));
  const QuantizedTensor qt = quantize_tensor(m, {Codec::Seq2, 32, ScaleMode::AbsMax});
  const auto bytes = write_tqf(std::vector{NamedQuantizedTensor{"w", qt}});
  const size_t codec_at = 12 + 2 + 1;

  auto bad_codec = bytes;
  bad_codec[codec_at] = 9;
  REQUIRE_THROWS_AS(read_tqf(bad_codec), FormatError);

  auto bad_dtype = bytes;
  bad_dtype[codec_at + 1] = 1;
  REQUIRE_THROWS_AS(read_tqf(bad_dtype), FormatError);

  auto bad_len = bytes;
  bad_len[codec_at + 16] += 1;  // scales_len_bytes low byte
  REQUIRE_THROWS_AS(read_tqf(bad_len), FormatError);

  auto bad_scale = bytes;
  // first scale float sits right after the name and fixed metadata
  const size_t scale_at = 12 + 3 + 32;
  bad_scale[scale_at + 3] = 0xFF;  // negative/NaN float
  REQUIRE_THROWS_AS(read_tqf(bad_scale), FormatError);
}

TEST_CASE("store: fuzzed mutations never escape FormatError") {
  Rng rng(4);
  const auto rwf_base = write_rwf(random_rwf_tensors(rng, 3));
  const auto tqf_base = write_tqf(random_tqf_tensors(rng, 3));

  int parsed = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto bytes = trial % 2 == 0 ? rwf_base : tqf_base;
    const int mode = int(rng.next_below(3));
    if (mode == 0 && !bytes.empty()) {
      bytes.resize(rng.next_below(uint32_t(bytes.size())));
    } else {
      const int flips = 1 + int(rng.next_below(8));
      for (int f = 0; f < flips && !bytes.empty(); ++f) {
        bytes[rng.next_below(uint32_t(bytes.size()))] = uint8_t(rng.next_below(256));
      }
    }
    try {
      if (trial % 2 == 0) {
        read_rwf(bytes);
      } else {
        read_tqf(bytes);
      }
      ++parsed;  // mutation survived validation; fine
    } catch (const FormatError&) {
      // expected
    }
  }
  SUCCEED();
}

TEST_CASE("inspect: summaries") {
  REQUIRE(inspect(write_rwf({})).find("0 tensors") != std::string::npos);

  const Matrix m(1, 128, std::vector<float>(128, 1.0f));
  const QuantizedTensor qt = quantize_tensor(m, {Codec::Sherry125, 128, ScaleMode::AbsMax});
  const std::string s = inspect(write_tqf(std::vector{NamedQuantizedTensor{"w", qt}}));
  REQUIRE(s.find("bits_per_weight=1.5") != std::string::npos);
  REQUIRE(s.find("codec=sherry125") != std::string::npos);
}
