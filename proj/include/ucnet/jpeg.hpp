#pragma once
// Baseline JPEG (ITU-T T.81 subset): Huffman-coded sequential DCT, 8-bit,
// 4:4:4 or 4:2:0, no restart markers. The parser exposes exact quantized
// coefficients; the decompressor produces unrounded, unclipped YCbCr planes.
// A 4:4:4 fixture encoder with IJG quality scaling fabricates covers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ucnet/common.hpp"
#include "ucnet/image.hpp"

namespace ucnet {

using QuantTable = std::array<uint16_t, 64>;  // zigzag order, as stored in DQT
using CoeffBlock = std::array<int16_t, 64>;   // natural (row-major) order

struct JpegComponent {
  int id = 0;
  int h_samp = 1, v_samp = 1;
  int quant_idx = 0;
  int blocks_w = 0, blocks_h = 0;  // MCU-padded block grid
  std::vector<CoeffBlock> blocks;  // row-major grid, absolute DC

  CoeffBlock& block(int by, int bx) { return blocks[size_t(by) * blocks_w + bx]; }
  const CoeffBlock& block(int by, int bx) const { return blocks[size_t(by) * blocks_w + bx]; }
};

struct JpegImage {
  int width = 0, height = 0;
  std::array<QuantTable, 4> quant_tables{};
  std::array<bool, 4> quant_present{};
  std::vector<JpegComponent> components;  // 1 (grayscale) or 3 (YCbCr)

  int num_components() const { return int(components.size()); }
  int h_max() const {
    int m = 1;
    for (const auto& c : components) m = std::max(m, c.h_samp);
    return m;
  }
  int v_max() const {
    int m = 1;
    for (const auto& c : components) m = std::max(m, c.v_samp);
    return m;
  }
};

namespace jpegdetail {

inline constexpr std::array<int, 64> kZigzagToNatural = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// Annex K base quantization tables, natural (row-major) order.
inline constexpr std::array<int, 64> kBaseLumaQuant = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
inline constexpr std::array<int, 64> kBaseChromaQuant = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct HuffSpec {
  std::array<uint8_t, 16> counts;  // codes per length 1..16
  std::vector<uint8_t> symbols;
};

// Annex K typical Huffman tables.
inline const HuffSpec& std_dc_luma() {
  static const HuffSpec t = {{0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
                             {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  return t;
}
inline const HuffSpec& std_dc_chroma() {
  static const HuffSpec t = {{0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
                             {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  return t;
}
inline const HuffSpec& std_ac_luma() {
  static const HuffSpec t = {
      {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125},
      {0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51,
       0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1,
       0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18,
       0x19, 0x1A, 0x25, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
       0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57,
       0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75,
       0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92,
       0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
       0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
       0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8,
       0xD9, 0xDA, 0xE1, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2,
       0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA}};
  return t;
}
inline const HuffSpec& std_ac_chroma() {
  static const HuffSpec t = {
      {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 119},
      {0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07,
       0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09,
       0x23, 0x33, 0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25,
       0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38,
       0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56,
       0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74,
       0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
       0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
       0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA,
       0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6,
       0xD7, 0xD8, 0xD9, 0xDA, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2,
       0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA}};
  return t;
}

// Canonical Huffman decoder per T.81 F.2.2.3 (MINCODE/MAXCODE/VALPTR).
struct HuffDecoder {
  std::array<int32_t, 17> mincode{};
  std::array<int32_t, 17> maxcode{};  // -1 where no codes of that length
  std::array<int32_t, 17> valptr{};
  std::vector<uint8_t> symbols;
  bool present = false;

  void build(const HuffSpec& spec) {
    symbols = spec.symbols;
    int32_t code = 0;
    size_t k = 0;
    for (int l = 1; l <= 16; ++l) {
      const int n = spec.counts[size_t(l - 1)];
      if (n == 0) {
        mincode[size_t(l)] = 0;
        maxcode[size_t(l)] = -1;
        valptr[size_t(l)] = 0;
      } else {
        valptr[size_t(l)] = int32_t(k);
        mincode[size_t(l)] = code;
        code += n;
        k += size_t(n);
        maxcode[size_t(l)] = code - 1;
      }
      code <<= 1;
    }
    require(k == symbols.size(), Errc::bad_format, "huffman table symbol count mismatch");
    present = true;
  }
};

// Canonical Huffman encoder (code/size per symbol).
struct HuffEncoder {
  std::array<uint16_t, 256> code{};
  std::array<uint8_t, 256> size{};

  void build(const HuffSpec& spec) {
    uint16_t c = 0;
    size_t k = 0;
    for (int l = 1; l <= 16; ++l) {
      for (int i = 0; i < spec.counts[size_t(l - 1)]; ++i) {
        const uint8_t sym = spec.symbols[k++];
        code[sym] = c;
        size[sym] = uint8_t(l);
        ++c;
      }
      c <<= 1;
    }
  }
};

// Entropy-coded-segment bit reader with 0xFF00 unstuffing.
struct BitReader {
  const uint8_t* p;
  size_t size;
  size_t pos;
  uint32_t bits = 0;
  int count = 0;

  BitReader(const uint8_t* data, size_t n, size_t start) : p(data), size(n), pos(start) {}

  int next_bit() {
    if (count == 0) {
      if (pos >= size) fail(Errc::jpeg_truncated, "entropy data exhausted");
      uint8_t byte = p[pos++];
      if (byte == 0xFF) {
        if (pos >= size) fail(Errc::jpeg_truncated, "entropy data exhausted at 0xFF");
        const uint8_t marker = p[pos++];
        if (marker != 0x00)
          fail(Errc::jpeg_truncated,
               "marker 0x" + std::to_string(marker) + " inside entropy data");
        byte = 0xFF;
      }
      bits = byte;
      count = 8;
    }
    --count;
    return int((bits >> count) & 1u);
  }

  int receive(int n) {
    int v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | next_bit();
    return v;
  }

  int decode(const HuffDecoder& t) {
    int32_t code = next_bit();
    int l = 1;
    while (code > t.maxcode[size_t(l)]) {
      if (++l > 16) fail(Errc::bad_format, "invalid huffman code");
      code = (code << 1) | next_bit();
    }
    return t.symbols[size_t(t.valptr[size_t(l)] + code - t.mincode[size_t(l)])];
  }
};

inline int extend(int v, int n) {
  if (n == 0) return 0;
  return v < (1 << (n - 1)) ? v - (1 << n) + 1 : v;
}

struct BitWriter {
  std::vector<uint8_t>& out;
  uint32_t acc = 0;
  int count = 0;

  explicit BitWriter(std::vector<uint8_t>& o) : out(o) {}

  void put(uint32_t bits, int n) {
    for (int i = n - 1; i >= 0; --i) {
      acc = (acc << 1) | ((bits >> i) & 1u);
      if (++count == 8) flush_byte();
    }
  }
  void flush_byte() {
    const uint8_t byte = uint8_t(acc & 0xff);
    out.push_back(byte);
    if (byte == 0xFF) out.push_back(0x00);
    acc = 0;
    count = 0;
  }
  void pad_to_byte() {
    while (count != 0) {
      acc = (acc << 1) | 1u;
      if (++count == 8) flush_byte();
    }
  }
};

inline int magnitude_category(int v) {
  int a = v < 0 ? -v : v;
  int n = 0;
  while (a) {
    ++n;
    a >>= 1;
  }
  return n;
}

// 8x8 DCT basis c[u][x] = 0.5 * C(u) * cos((2x+1) u pi / 16); orthonormal.
inline const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto m = [] {
    std::array<std::array<double, 8>, 8> b{};
    const double pi = 3.14159265358979323846;
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
      for (int x = 0; x < 8; ++x)
        b[size_t(u)][size_t(x)] = 0.5 * cu * std::cos((2 * x + 1) * u * pi / 16.0);
    }
    return b;
  }();
  return m;
}

inline void validate_sampling(const JpegImage& j) {
  const int n = j.num_components();
  require(n == 1 || n == 3, Errc::jpeg_unsupported,
          "unsupported component count " + std::to_string(n));
  bool all_111 = true;
  for (const auto& c : j.components) {
    require(c.h_samp >= 1 && c.h_samp <= 4 && c.v_samp >= 1 && c.v_samp <= 4,
            Errc::bad_format, "bad sampling factors");
    if (c.h_samp != 1 || c.v_samp != 1) all_111 = false;
  }
  if (all_111) return;
  const bool is_420 = n == 3 && j.components[0].h_samp == 2 && j.components[0].v_samp == 2 &&
                      j.components[1].h_samp == 1 && j.components[1].v_samp == 1 &&
                      j.components[2].h_samp == 1 && j.components[2].v_samp == 1;
  require(is_420, Errc::jpeg_unsupported, "only 4:4:4 and 4:2:0 sampling supported");
}

}  // namespace jpegdetail

// ---------------------------------------------------------------------------
// Parsing

inline JpegImage parse_jpeg(const std::vector<uint8_t>& bytes) {
  using namespace jpegdetail;
  require(bytes.size() >= 4, Errc::jpeg_truncated, "stream too short");
  require(bytes[0] == 0xFF && bytes[1] == 0xD8, Errc::jpeg_bad_marker, "missing SOI");

  JpegImage img;
  std::array<HuffDecoder, 4> dc_tables, ac_tables;
  bool have_sof = false;
  size_t pos = 2;

  auto read_u16be = [&](const char* what) -> int {
    if (pos + 2 > bytes.size()) fail(Errc::jpeg_truncated, std::string("truncated ") + what);
    const int v = (int(bytes[pos]) << 8) | bytes[pos + 1];
    pos += 2;
    return v;
  };

  while (true) {
    // Markers: 0xFF then a non-fill byte.
    if (pos >= bytes.size()) fail(Errc::jpeg_truncated, "unexpected end before EOI");
    if (bytes[pos] != 0xFF) fail(Errc::jpeg_bad_marker, "expected marker byte 0xFF");
    while (pos < bytes.size() && bytes[pos] == 0xFF) ++pos;
    if (pos >= bytes.size()) fail(Errc::jpeg_truncated, "dangling 0xFF fill bytes");
    const uint8_t marker = bytes[pos++];

    if (marker == 0xD9) fail(Errc::jpeg_truncated, "EOI before SOS");

    if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7))
      fail(Errc::jpeg_bad_marker, "unexpected standalone marker outside scan");

    if (marker == 0xC2) fail(Errc::jpeg_progressive, "progressive JPEG (SOF2)");
    if (marker == 0xCC || (marker >= 0xC9 && marker <= 0xCB) ||
        (marker >= 0xCD && marker <= 0xCF))
      fail(Errc::jpeg_arithmetic, "arithmetic-coded JPEG");
    if (marker == 0xC1 || marker == 0xC3 || (marker >= 0xC5 && marker <= 0xC7))
      fail(Errc::jpeg_unsupported, "non-baseline SOF marker");

    const int seg_len = read_u16be("segment length");
    require(seg_len >= 2, Errc::bad_format, "bad segment length");
    const size_t seg_end = pos + size_t(seg_len) - 2;
    if (seg_end > bytes.size()) fail(Errc::jpeg_truncated, "segment overruns stream");

    if ((marker >= 0xE0 && marker <= 0xEF) || marker == 0xFE) {
      pos = seg_end;  // APPn / COM
      continue;
    }

    switch (marker) {
      case 0xDB: {  // DQT
        while (pos < seg_end) {
          const uint8_t pq_tq = bytes[pos++];
          const int pq = pq_tq >> 4, tq = pq_tq & 0x0F;
          require(pq == 0 || pq == 1, Errc::bad_format, "bad DQT precision");
          require(tq < 4, Errc::bad_format, "bad DQT table id");
          QuantTable& q = img.quant_tables[size_t(tq)];
          for (int k = 0; k < 64; ++k) {
            if (pq == 0) {
              require(pos < seg_end, Errc::jpeg_truncated, "truncated DQT");
              q[size_t(k)] = bytes[pos++];
            } else {
              require(pos + 2 <= seg_end, Errc::jpeg_truncated, "truncated DQT");
              q[size_t(k)] = uint16_t((int(bytes[pos]) << 8) | bytes[pos + 1]);
              pos += 2;
            }
            require(q[size_t(k)] > 0, Errc::bad_format, "zero quantizer");
          }
          img.quant_present[size_t(tq)] = true;
        }
        require(pos == seg_end, Errc::bad_format, "DQT length mismatch");
        break;
      }
      case 0xC4: {  // DHT
        while (pos < seg_end) {
          const uint8_t tc_th = bytes[pos++];
          const int tc = tc_th >> 4, th = tc_th & 0x0F;
          require(tc <= 1 && th < 4, Errc::bad_format, "bad DHT header");
          HuffSpec spec;
          size_t total = 0;
          require(pos + 16 <= seg_end, Errc::jpeg_truncated, "truncated DHT");
          for (int i = 0; i < 16; ++i) {
            spec.counts[size_t(i)] = bytes[pos++];
            total += spec.counts[size_t(i)];
          }
          require(pos + total <= seg_end, Errc::jpeg_truncated, "truncated DHT symbols");
          spec.symbols.assign(bytes.begin() + long(pos), bytes.begin() + long(pos + total));
          pos += total;
          (tc == 0 ? dc_tables : ac_tables)[size_t(th)].build(spec);
        }
        require(pos == seg_end, Errc::bad_format, "DHT length mismatch");
        break;
      }
      case 0xC0: {  // SOF0, baseline sequential
        require(!have_sof, Errc::bad_format, "duplicate SOF");
        require(seg_end - pos >= 6, Errc::jpeg_truncated, "truncated SOF");
        const int precision = bytes[pos++];
        require(precision == 8, Errc::jpeg_unsupported, "only 8-bit precision supported");
        img.height = (int(bytes[pos]) << 8) | bytes[pos + 1];
        img.width = (int(bytes[pos + 2]) << 8) | bytes[pos + 3];
        pos += 4;
        require(img.height > 0 && img.width > 0, Errc::bad_format, "bad dimensions");
        const int nf = bytes[pos++];
        require(nf == 1 || nf == 3, Errc::jpeg_unsupported,
                "unsupported component count " + std::to_string(nf));
        require(seg_end - pos == size_t(nf) * 3, Errc::bad_format, "bad SOF length");
        for (int i = 0; i < nf; ++i) {
          JpegComponent comp;
          comp.id = bytes[pos];
          comp.h_samp = bytes[pos + 1] >> 4;
          comp.v_samp = bytes[pos + 1] & 0x0F;
          comp.quant_idx = bytes[pos + 2];
          require(comp.quant_idx < 4, Errc::bad_format, "bad quant table id");
          pos += 3;
          img.components.push_back(comp);
        }
        validate_sampling(img);
        have_sof = true;
        break;
      }
      case 0xDD: {  // DRI
        require(seg_end - pos == 2, Errc::bad_format, "bad DRI length");
        const int interval = (int(bytes[pos]) << 8) | bytes[pos + 1];
        pos += 2;
        require(interval == 0, Errc::jpeg_unsupported, "restart intervals not supported");
        break;
      }
      case 0xDA: {  // SOS; decode the single baseline scan
        require(have_sof, Errc::bad_format, "SOS before SOF");
        const int ns = bytes[pos++];
        require(ns == img.num_components(), Errc::jpeg_unsupported,
                "scan must be interleaved over all components");
        struct ScanComp {
          int comp_idx, dc_id, ac_id;
        };
        std::vector<ScanComp> scan;
        for (int i = 0; i < ns; ++i) {
          const int cs = bytes[pos];
          const int dc_id = bytes[pos + 1] >> 4, ac_id = bytes[pos + 1] & 0x0F;
          pos += 2;
          int ci = -1;
          for (int c = 0; c < img.num_components(); ++c)
            if (img.components[size_t(c)].id == cs) ci = c;
          require(ci >= 0, Errc::bad_format, "scan references unknown component");
          require(dc_tables[size_t(dc_id)].present && ac_tables[size_t(ac_id)].present,
                  Errc::bad_format, "scan references missing huffman table");
          scan.push_back({ci, dc_id, ac_id});
        }
        require(seg_end - pos == 3, Errc::bad_format, "bad SOS length");
        const int ss = bytes[pos], se = bytes[pos + 1], ah_al = bytes[pos + 2];
        pos += 3;
        require(ss == 0 && se == 63 && ah_al == 0, Errc::jpeg_unsupported,
                "non-baseline spectral selection");

        for (const auto& c : img.components)
          require(img.quant_present[size_t(c.quant_idx)], Errc::bad_format,
                  "missing quantization table");

        // Allocate MCU-padded block grids.
        const int hmax = img.h_max(), vmax = img.v_max();
        const int mcus_x = (img.width + 8 * hmax - 1) / (8 * hmax);
        const int mcus_y = (img.height + 8 * vmax - 1) / (8 * vmax);
        for (auto& comp : img.components) {
          comp.blocks_w = mcus_x * comp.h_samp;
          comp.blocks_h = mcus_y * comp.v_samp;
          comp.blocks.assign(size_t(comp.blocks_w) * comp.blocks_h, CoeffBlock{});
        }

        BitReader br(bytes.data(), bytes.size(), pos);
        std::vector<int> dc_pred(size_t(img.num_components()), 0);
        for (int my = 0; my < mcus_y; ++my) {
          for (int mx = 0; mx < mcus_x; ++mx) {
            for (const auto& sc : scan) {
              auto& comp = img.components[size_t(sc.comp_idx)];
              for (int v = 0; v < comp.v_samp; ++v) {
                for (int hh = 0; hh < comp.h_samp; ++hh) {
                  CoeffBlock& blk = comp.block(my * comp.v_samp + v, mx * comp.h_samp + hh);
                  const int t = br.decode(dc_tables[size_t(sc.dc_id)]);
                  require(t <= 11, Errc::bad_format, "bad DC category");
                  const int diff = extend(br.receive(t), t);
                  dc_pred[size_t(sc.comp_idx)] += diff;
                  blk[0] = int16_t(dc_pred[size_t(sc.comp_idx)]);
                  int k = 1;
                  while (k <= 63) {
                    const int rs = br.decode(ac_tables[size_t(sc.ac_id)]);
                    const int r = rs >> 4, s = rs & 0x0F;
                    if (s == 0) {
                      if (r == 15) {
                        k += 16;
                        continue;
                      }
                      break;  // EOB
                    }
                    k += r;
                    require(k <= 63, Errc::bad_format, "AC run overflows block");
                    blk[size_t(kZigzagToNatural[size_t(k)])] = int16_t(extend(br.receive(s), s));
                    ++k;
                  }
                }
              }
            }
          }
        }

        // Expect EOI after the scan (possibly after fill bytes).
        pos = br.pos;
        while (pos + 1 < bytes.size()) {
          if (bytes[pos] == 0xFF && bytes[pos + 1] == 0xD9) return img;
          if (bytes[pos] == 0xFF && bytes[pos + 1] == 0xFF) {
            ++pos;
            continue;
          }
          fail(Errc::jpeg_bad_marker, "expected EOI after scan");
        }
        fail(Errc::jpeg_truncated, "missing EOI");
      }
      default:
        fail(Errc::jpeg_bad_marker, "unhandled marker 0x" + std::to_string(marker));
    }
  }
}

// ---------------------------------------------------------------------------
// IDCT / decompression

// Dequantizes (pointwise multiply, qtable given in zigzag order) and applies
// the 2-D type-III DCT, then adds the +128 level shift. No rounding, no
// clipping.
inline std::array<double, 64> idct_block(const CoeffBlock& coeffs, const QuantTable& qtable) {
  using namespace jpegdetail;
  const auto& basis = dct_basis();
  std::array<double, 64> deq{};
  for (int k = 0; k < 64; ++k)
    deq[size_t(kZigzagToNatural[size_t(k)])] =
        double(coeffs[size_t(kZigzagToNatural[size_t(k)])]) * double(qtable[size_t(k)]);

  // tmp[u][y] = sum_v deq[u][v] * basis[v][y]
  std::array<double, 64> tmp{};
  for (int u = 0; u < 8; ++u)
    for (int y = 0; y < 8; ++y) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += deq[size_t(u * 8 + v)] * basis[size_t(v)][size_t(y)];
      tmp[size_t(u * 8 + y)] = acc;
    }
  std::array<double, 64> out{};
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += basis[size_t(u)][size_t(x)] * tmp[size_t(u * 8 + y)];
      out[size_t(x * 8 + y)] = acc + 128.0;
    }
  return out;
}

// Per-component IDCT of all blocks at the component's native resolution,
// cropped to the component size implied by the sampling factors.
inline std::vector<Plane> decompress_planes(const JpegImage& j) {
  require(!j.components.empty() && j.width > 0 && j.height > 0, Errc::invalid_argument,
          "decompress on unparsed image");
  const int hmax = j.h_max(), vmax = j.v_max();
  std::vector<Plane> planes;
  for (const auto& comp : j.components) {
    const int cw = (j.width * comp.h_samp + hmax - 1) / hmax;
    const int ch = (j.height * comp.v_samp + vmax - 1) / vmax;
    Plane plane(ch, cw);
    for (int by = 0; by < comp.blocks_h; ++by) {
      for (int bx = 0; bx < comp.blocks_w; ++bx) {
        const auto px = idct_block(comp.block(by, bx), j.quant_tables[size_t(comp.quant_idx)]);
        const int y0 = by * 8, x0 = bx * 8;
        for (int y = 0; y < 8 && y0 + y < ch; ++y)
          for (int x = 0; x < 8 && x0 + x < cw; ++x)
            plane.at(y0 + y, x0 + x) = px[size_t(y * 8 + x)];
      }
    }
    planes.push_back(std::move(plane));
  }
  return planes;
}

// Full-size unrounded YCbCr planes; 4:2:0 chroma is upsampled to luma size by
// nearest-neighbor pixel replication.
inline ColorPlanes decompress_to_ycbcr(const JpegImage& j) {
  require(j.num_components() == 3, Errc::invalid_argument,
          "YCbCr decompression needs 3 components");
  auto native = decompress_planes(j);
  const int hmax = j.h_max(), vmax = j.v_max();
  ColorPlanes cp = make_color_planes(Domain::JpegYcbcr, j.height, j.width);
  for (int c = 0; c < 3; ++c) {
    const auto& comp = j.components[size_t(c)];
    const Plane& src = native[size_t(c)];
    if (comp.h_samp == hmax && comp.v_samp == vmax) {
      cp.planes[size_t(c)] = src;
      continue;
    }
    Plane& dst = cp.planes[size_t(c)];
    for (int y = 0; y < j.height; ++y) {
      const int sy = std::min(y * comp.v_samp / vmax, src.h - 1);
      for (int x = 0; x < j.width; ++x)
        dst.at(y, x) = src.at(sy, std::min(x * comp.h_samp / hmax, src.w - 1));
    }
  }
  return cp;
}

// ---------------------------------------------------------------------------
// Encoding

// IJG quality scaling of a base table; natural-order input, zigzag output.
inline QuantTable scaled_quant_table(const std::array<int, 64>& base_natural, int quality) {
  using namespace jpegdetail;
  require(quality >= 1 && quality <= 100, Errc::invalid_argument, "quality must be 1..100");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable q{};
  for (int k = 0; k < 64; ++k) {
    const int entry = (base_natural[size_t(kZigzagToNatural[size_t(k)])] * scale + 50) / 100;
    q[size_t(k)] = uint16_t(std::clamp(entry, 1, 255));
  }
  return q;
}

// Serializes a JpegImage with the Annex K typical Huffman tables. Supports
// the same 4:4:4 / 4:2:0 / grayscale subset as the parser; byte output is
// deterministic.
inline std::vector<uint8_t> serialize_jpeg(const JpegImage& img) {
  using namespace jpegdetail;
  validate_sampling(img);
  require(img.width > 0 && img.height > 0, Errc::invalid_argument, "empty image");

  std::vector<uint8_t> out;
  auto put_marker = [&](uint8_t m) {
    out.push_back(0xFF);
    out.push_back(m);
  };
  auto put_u16be = [&](int v) {
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v & 0xff));
  };

  put_marker(0xD8);  // SOI

  // Minimal JFIF APP0.
  put_marker(0xE0);
  put_u16be(16);
  const char jfif[5] = {'J', 'F', 'I', 'F', 0};
  out.insert(out.end(), jfif, jfif + 5);
  out.push_back(1);
  out.push_back(1);
  out.push_back(0);
  put_u16be(1);
  put_u16be(1);
  out.push_back(0);
  out.push_back(0);

  // DQT, one segment per present table.
  for (int t = 0; t < 4; ++t) {
    if (!img.quant_present[size_t(t)]) continue;
    bool wide = false;
    for (auto v : img.quant_tables[size_t(t)]) wide |= v > 255;
    put_marker(0xDB);
    put_u16be(2 + 1 + (wide ? 128 : 64));
    out.push_back(uint8_t((wide ? 0x10 : 0x00) | t));
    for (auto v : img.quant_tables[size_t(t)]) {
      if (wide) out.push_back(uint8_t(v >> 8));
      out.push_back(uint8_t(v & 0xff));
    }
  }

  // SOF0.
  put_marker(0xC0);
  put_u16be(8 + 3 * img.num_components());
  out.push_back(8);
  put_u16be(img.height);
  put_u16be(img.width);
  out.push_back(uint8_t(img.num_components()));
  for (const auto& c : img.components) {
    out.push_back(uint8_t(c.id));
    out.push_back(uint8_t((c.h_samp << 4) | c.v_samp));
    out.push_back(uint8_t(c.quant_idx));
  }

  // DHT: luma tables always, chroma tables when 3 components.
  auto put_dht = [&](int tc, int th, const HuffSpec& spec) {
    put_marker(0xC4);
    put_u16be(int(2 + 1 + 16 + spec.symbols.size()));
    out.push_back(uint8_t((tc << 4) | th));
    for (auto c : spec.counts) out.push_back(c);
    out.insert(out.end(), spec.symbols.begin(), spec.symbols.end());
  };
  put_dht(0, 0, std_dc_luma());
  put_dht(1, 0, std_ac_luma());
  if (img.num_components() == 3) {
    put_dht(0, 1, std_dc_chroma());
    put_dht(1, 1, std_ac_chroma());
  }

  // SOS.
  put_marker(0xDA);
  put_u16be(6 + 2 * img.num_components());
  out.push_back(uint8_t(img.num_components()));
  for (int c = 0; c < img.num_components(); ++c) {
    out.push_back(uint8_t(img.components[size_t(c)].id));
    const int table = c == 0 ? 0 : 1;
    out.push_back(uint8_t((table << 4) | table));
  }
  out.push_back(0);
  out.push_back(63);
  out.push_back(0);

  // Entropy-coded scan, interleaved MCU order.
  std::array<HuffEncoder, 2> dc_enc, ac_enc;
  dc_enc[0].build(std_dc_luma());
  ac_enc[0].build(std_ac_luma());
  dc_enc[1].build(std_dc_chroma());
  ac_enc[1].build(std_ac_chroma());

  const int hmax = img.h_max(), vmax = img.v_max();
  const int mcus_x = (img.width + 8 * hmax - 1) / (8 * hmax);
  const int mcus_y = (img.height + 8 * vmax - 1) / (8 * vmax);
  for (const auto& c : img.components) {
    require(c.blocks_w == mcus_x * c.h_samp && c.blocks_h == mcus_y * c.v_samp,
            Errc::invalid_argument, "component block grid does not match MCU grid");
  }

  BitWriter bw(out);
  std::vector<int> dc_pred(size_t(img.num_components()), 0);
  auto encode_value = [&](BitWriter& b, const HuffEncoder& enc, int run, int value) {
    const int s = magnitude_category(value);
    const int rs = (run << 4) | s;
    b.put(enc.code[size_t(rs)], enc.size[size_t(rs)]);
    if (s > 0) {
      int bits = value < 0 ? value + (1 << s) - 1 : value;
      b.put(uint32_t(bits), s);
    }
  };

  for (int my = 0; my < mcus_y; ++my) {
    for (int mx = 0; mx < mcus_x; ++mx) {
      for (int ci = 0; ci < img.num_components(); ++ci) {
        const auto& comp = img.components[size_t(ci)];
        const int table = ci == 0 ? 0 : 1;
        for (int v = 0; v < comp.v_samp; ++v) {
          for (int hh = 0; hh < comp.h_samp; ++hh) {
            const CoeffBlock& blk = comp.block(my * comp.v_samp + v, mx * comp.h_samp + hh);
            const int diff = int(blk[0]) - dc_pred[size_t(ci)];
            dc_pred[size_t(ci)] = blk[0];
            const int s = magnitude_category(diff);
            require(s <= 11, Errc::invalid_argument, "DC difference out of range");
            bw.put(dc_enc[size_t(table)].code[size_t(s)], dc_enc[size_t(table)].size[size_t(s)]);
            if (s > 0) {
              int bits = diff < 0 ? diff + (1 << s) - 1 : diff;
              bw.put(uint32_t(bits), s);
            }
            int run = 0;
            for (int k = 1; k <= 63; ++k) {
              const int val = blk[size_t(kZigzagToNatural[size_t(k)])];
              if (val == 0) {
                ++run;
                continue;
              }
              while (run > 15) {
                bw.put(ac_enc[size_t(table)].code[0xF0], ac_enc[size_t(table)].size[0xF0]);
                run -= 16;
              }
              require(magnitude_category(val) <= 10, Errc::invalid_argument,
                      "AC coefficient out of range");
              encode_value(bw, ac_enc[size_t(table)], run, val);
              run = 0;
            }
            if (run > 0)
              bw.put(ac_enc[size_t(table)].code[0x00], ac_enc[size_t(table)].size[0x00]);
          }
        }
      }
    }
  }
  bw.pad_to_byte();

  put_marker(0xD9);  // EOI
  return out;
}

struct EncodedJpeg {
  std::vector<uint8_t> bytes;
  JpegImage image;  // the coefficients actually written
};

// 4:4:4 fixture encoder: RGB -> YCbCr, forward DCT, IJG-scaled quantization,
// standard Huffman tables. Input planes are padded to block multiples by edge
// replication; `width`/`height` record the true size.
inline EncodedJpeg encode_jpeg(const ColorPlanes& rgb, int quality) {
  using namespace jpegdetail;
  require(rgb.domain == Domain::SpatialRgb, Errc::invalid_argument,
          "encoder expects spatial RGB planes");
  require(rgb.height > 0 && rgb.width > 0, Errc::invalid_argument, "empty image");
  for (const auto& p : rgb.planes)
    require(p.h == rgb.height && p.w == rgb.width, Errc::invalid_argument,
            "encoder planes must share dimensions");

  const int h = rgb.height, w = rgb.width;
  const int bh = (h + 7) / 8, bw = (w + 7) / 8;

  JpegImage img;
  img.width = w;
  img.height = h;
  img.quant_tables[0] = scaled_quant_table(kBaseLumaQuant, quality);
  img.quant_tables[1] = scaled_quant_table(kBaseChromaQuant, quality);
  img.quant_present[0] = img.quant_present[1] = true;
  for (int c = 0; c < 3; ++c) {
    JpegComponent comp;
    comp.id = c + 1;
    comp.h_samp = comp.v_samp = 1;
    comp.quant_idx = c == 0 ? 0 : 1;
    comp.blocks_w = bw;
    comp.blocks_h = bh;
    comp.blocks.assign(size_t(bw) * bh, CoeffBlock{});
    img.components.push_back(std::move(comp));
  }

  // RGB -> YCbCr (JFIF), level-shifted by -128.
  std::array<std::vector<double>, 3> ycc;
  for (auto& p : ycc) p.assign(size_t(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = rgb.planes[0].at(y, x);
      const double g = rgb.planes[1].at(y, x);
      const double b = rgb.planes[2].at(y, x);
      const size_t i = size_t(y) * w + x;
      ycc[0][i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
      ycc[1][i] = -0.168735892 * r - 0.331264108 * g + 0.5 * b;
      ycc[2][i] = 0.5 * r - 0.418687589 * g - 0.081312411 * b;
    }
  }

  const auto& basis = dct_basis();
  auto sample = [&](int c, int y, int x) {
    return ycc[size_t(c)][size_t(std::min(y, h - 1)) * w + std::min(x, w - 1)];
  };
  std::array<double, 64> q_natural{};
  for (int c = 0; c < 3; ++c) {
    const QuantTable& q = img.quant_tables[size_t(img.components[size_t(c)].quant_idx)];
    for (int k = 0; k < 64; ++k) q_natural[size_t(kZigzagToNatural[size_t(k)])] = q[size_t(k)];
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        double block[8][8];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) block[y][x] = sample(c, by * 8 + y, bx * 8 + x);
        CoeffBlock& out = img.components[size_t(c)].block(by, bx);
        for (int u = 0; u < 8; ++u) {
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) {
              double row = 0.0;
              for (int x = 0; x < 8; ++x) row += basis[size_t(v)][size_t(x)] * block[y][x];
              acc += basis[size_t(u)][size_t(y)] * row;
            }
            out[size_t(u * 8 + v)] = int16_t(std::lround(acc / q_natural[size_t(u * 8 + v)]));
          }
        }
      }
    }
  }

  EncodedJpeg enc;
  enc.bytes = serialize_jpeg(img);
  enc.image = std::move(img);
  return enc;
}

// Quant-table fingerprint used by `info --jpeg`.
inline uint64_t quant_table_digest(const QuantTable& q) {
  std::array<uint8_t, 128> bytes{};
  for (int k = 0; k < 64; ++k) {
    bytes[size_t(2 * k)] = uint8_t(q[size_t(k)] & 0xff);
    bytes[size_t(2 * k + 1)] = uint8_t(q[size_t(k)] >> 8);
  }
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace ucnet
