#include "ucnet/jpeg.hpp"

#include <gtest/gtest.h>

#include "ucnet/channelrep.hpp"
#include "ucnet/rng.hpp"
#include "ucnet/texture.hpp"

using namespace ucnet;

namespace {

ColorPlanes textured_rgb(int h, int w, uint64_t seed) {
  return split_rgb(synth_textured_cover(h, w, seed));
}

// Finds the payload of the first marker of the given code; returns offset.
size_t find_marker(const std::vector<uint8_t>& bytes, uint8_t code) {
  for (size_t i = 0; i + 1 < bytes.size(); ++i)
    if (bytes[i] == 0xFF && bytes[i + 1] == code) return i;
  ADD_FAILURE() << "marker not found";
  return 0;
}

}  // namespace

TEST(JpegRoundTrip, CoefficientsSurviveExactly) {
  for (uint64_t seed : {1u, 2u, 3u}) {
    const EncodedJpeg enc = encode_jpeg(textured_rgb(32, 48, seed), 75);
    const JpegImage parsed = parse_jpeg(enc.bytes);
    ASSERT_EQ(parsed.num_components(), 3);
    EXPECT_EQ(parsed.width, 48);
    EXPECT_EQ(parsed.height, 32);
    for (int c = 0; c < 3; ++c) {
      const auto& a = enc.image.components[size_t(c)];
      const auto& b = parsed.components[size_t(c)];
      ASSERT_EQ(a.blocks_w, b.blocks_w);
      ASSERT_EQ(a.blocks_h, b.blocks_h);
      for (size_t i = 0; i < a.blocks.size(); ++i)
        ASSERT_EQ(a.blocks[i], b.blocks[i]) << "component " << c << " block " << i;
    }
    for (int t = 0; t < 2; ++t) EXPECT_EQ(enc.image.quant_tables[size_t(t)],
                                          parsed.quant_tables[size_t(t)]);
  }
}

TEST(JpegParse, RejectsProgressive) {
  EncodedJpeg enc = encode_jpeg(textured_rgb(16, 16, 4), 80);
  const size_t sof = find_marker(enc.bytes, 0xC0);
  enc.bytes[sof + 1] = 0xC2;
  try {
    parse_jpeg(enc.bytes);
    FAIL() << "expected PROGRESSIVE_UNSUPPORTED";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::jpeg_progressive);
  }
}

TEST(JpegParse, RejectsArithmetic) {
  EncodedJpeg enc = encode_jpeg(textured_rgb(16, 16, 5), 80);
  const size_t sof = find_marker(enc.bytes, 0xC0);
  enc.bytes[sof + 1] = 0xC9;
  try {
    parse_jpeg(enc.bytes);
    FAIL() << "expected ARITHMETIC_UNSUPPORTED";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::jpeg_arithmetic);
  }
}

TEST(JpegParse, RejectsTruncatedStream) {
  EncodedJpeg enc = encode_jpeg(textured_rgb(32, 32, 6), 80);
  std::vector<uint8_t> cut(enc.bytes.begin(), enc.bytes.begin() + long(enc.bytes.size() / 2));
  try {
    parse_jpeg(cut);
    FAIL() << "expected TRUNCATED_STREAM";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::jpeg_truncated);
  }
}

TEST(JpegParse, RejectsBadMarker) {
  std::vector<uint8_t> bytes = {0x12, 0x34, 0x56, 0x78};
  try {
    parse_jpeg(bytes);
    FAIL() << "expected BAD_MARKER";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::jpeg_bad_marker);
  }
}

TEST(JpegParse, RejectsRestartIntervals) {
  EncodedJpeg enc = encode_jpeg(textured_rgb(16, 16, 7), 80);
  // Splice a DRI segment with interval 2 right before SOS.
  const size_t sos = find_marker(enc.bytes, 0xDA);
  const uint8_t dri[6] = {0xFF, 0xDD, 0x00, 0x04, 0x00, 0x02};
  enc.bytes.insert(enc.bytes.begin() + long(sos), dri, dri + 6);
  try {
    parse_jpeg(enc.bytes);
    FAIL() << "expected UNSUPPORTED_FEATURE";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::jpeg_unsupported);
  }
}

// Quality 100 makes every scaled entry (base*0 + 50)/100 = 0, clamped to 1:
// the crafted file carries all-ones tables, visible in the raw DQT payload.
TEST(JpegEncode, Quality100TablesAreAllOnes) {
  const EncodedJpeg enc = encode_jpeg(textured_rgb(16, 16, 8), 100);
  const JpegImage parsed = parse_jpeg(enc.bytes);
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 64; ++k) ASSERT_EQ(parsed.quant_tables[size_t(t)][size_t(k)], 1);
  const size_t dqt = find_marker(enc.bytes, 0xDB);
  for (int k = 0; k < 64; ++k) ASSERT_EQ(enc.bytes[dqt + 5 + size_t(k)], 1);
}

TEST(JpegEncode, Quality50IsBaseTable) {
  const EncodedJpeg enc = encode_jpeg(textured_rgb(16, 16, 9), 50);
  // Spot-check against the standard base tables in zigzag order.
  using jpegdetail::kBaseLumaQuant;
  using jpegdetail::kZigzagToNatural;
  for (int k = 0; k < 64; ++k)
    ASSERT_EQ(enc.image.quant_tables[0][size_t(k)],
              kBaseLumaQuant[size_t(kZigzagToNatural[size_t(k)])]);
  EXPECT_EQ(enc.image.quant_tables[0][0], 16);  // DC quantizer of the luma base table
}

TEST(IdctBlock, DcOnlyIsConstant) {
  CoeffBlock block{};
  QuantTable q{};
  q.fill(1);
  block[0] = 96;
  const auto px = idct_block(block, q);
  for (double v : px) ASSERT_NEAR(v, 96.0 / 8.0 + 128.0, 1e-9);
}

TEST(IdctBlock, AllZeroIs128) {
  CoeffBlock block{};
  QuantTable q{};
  q.fill(7);
  const auto px = idct_block(block, q);
  for (double v : px) ASSERT_DOUBLE_EQ(v, 128.0);
}

// Orthonormality oracle: the 64x64 basis matrix B[(u,v)][(x,y)] built from
// the closed form must satisfy B^T B = I, and idct_block must equal applying
// B; energy is then preserved (Parseval).
TEST(IdctBlock, MatchesBasisMatrixAndParseval) {
  double basis[64][64];
  const double pi = 3.14159265358979323846;
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v)
      for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
          const double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
          const double cv = v == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
          basis[u * 8 + v][x * 8 + y] = 0.25 * cu * cv * std::cos((2 * x + 1) * u * pi / 16.0) *
                                        std::cos((2 * y + 1) * v * pi / 16.0);
        }
  for (int a = 0; a < 64; ++a)
    for (int b = 0; b < 64; ++b) {
      double dot = 0.0;
      for (int i = 0; i < 64; ++i) dot += basis[a][i] * basis[b][i];
      ASSERT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-12);
    }

  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    CoeffBlock block{};
    QuantTable q{};
    for (auto& v : q) v = uint16_t(1 + rng.below(20));
    for (auto& c : block) c = int16_t(int(rng.below(101)) - 50);
    const auto px = idct_block(block, q);

    double deq[64];
    for (int k = 0; k < 64; ++k) {
      const int nat = jpegdetail::kZigzagToNatural[size_t(k)];
      deq[nat] = double(block[size_t(nat)]) * q[size_t(k)];
    }
    double energy_coeff = 0.0, energy_pixel = 0.0;
    for (int i = 0; i < 64; ++i) {
      double acc = 0.0;
      for (int f = 0; f < 64; ++f) acc += basis[f][i] * deq[f];
      ASSERT_NEAR(px[size_t(i)], acc + 128.0, 1e-9);
      energy_pixel += (px[size_t(i)] - 128.0) * (px[size_t(i)] - 128.0);
    }
    for (int f = 0; f < 64; ++f) energy_coeff += deq[f] * deq[f];
    ASSERT_NEAR(energy_pixel, energy_coeff, 1e-6 * std::max(1.0, energy_coeff));
  }
}

TEST(IdctBlock, LinearWithShiftRemoved) {
  Rng rng(21);
  CoeffBlock s1{}, s2{}, s3{};
  QuantTable q{};
  for (auto& v : q) v = uint16_t(1 + rng.below(30));
  for (int i = 0; i < 64; ++i) {
    s1[size_t(i)] = int16_t(int(rng.below(41)) - 20);
    s2[size_t(i)] = int16_t(int(rng.below(41)) - 20);
    s3[size_t(i)] = int16_t(2 * s1[size_t(i)] + 3 * s2[size_t(i)]);
  }
  const auto p1 = idct_block(s1, q), p2 = idct_block(s2, q), p3 = idct_block(s3, q);
  for (int i = 0; i < 64; ++i)
    ASSERT_NEAR(p3[size_t(i)] - 128.0, 2.0 * (p1[size_t(i)] - 128.0) + 3.0 * (p2[size_t(i)] - 128.0),
                1e-9);
}

TEST(Decompress, SingleBlockGrayscaleDcOnly) {
  JpegImage j;
  j.width = 8;
  j.height = 8;
  j.quant_tables[0].fill(2);
  j.quant_present[0] = true;
  JpegComponent comp;
  comp.id = 1;
  comp.h_samp = comp.v_samp = 1;
  comp.quant_idx = 0;
  comp.blocks_w = comp.blocks_h = 1;
  comp.blocks.assign(1, CoeffBlock{});
  comp.blocks[0][0] = 40;
  j.components.push_back(comp);

  // Serialize/parse exercises the grayscale path end to end.
  const JpegImage parsed = parse_jpeg(serialize_jpeg(j));
  ASSERT_EQ(parsed.num_components(), 1);
  EXPECT_EQ(parsed.components[0].blocks[0], j.components[0].blocks[0]);
  const auto planes = decompress_planes(parsed);
  ASSERT_EQ(planes.size(), 1u);
  for (double v : planes[0].v) ASSERT_NEAR(v, 40.0 * 2.0 / 8.0 + 128.0, 1e-9);
}

TEST(Decompress, Ycbcr444DimensionsAndFractionalValues) {
  const EncodedJpeg enc = encode_jpeg(textured_rgb(24, 40, 30), 75);
  const ColorPlanes cp = decompress_to_ycbcr(parse_jpeg(enc.bytes));
  EXPECT_EQ(cp.domain, Domain::JpegYcbcr);
  for (const auto& p : cp.planes) {
    EXPECT_EQ(p.h, 24);
    EXPECT_EQ(p.w, 40);
  }
  // Unrounded output must keep fractional values on a textured image.
  bool fractional = false;
  for (const auto& p : cp.planes)
    for (double v : p.v) fractional |= std::fabs(v - std::round(v)) > 1e-6;
  EXPECT_TRUE(fractional);
}

TEST(Decompress, SingleAcChangeIsBlockLocal) {
  const EncodedJpeg enc = encode_jpeg(textured_rgb(32, 32, 31), 75);
  JpegImage a = parse_jpeg(enc.bytes);
  JpegImage b = a;
  b.components[1].block(1, 2)[3] = int16_t(b.components[1].block(1, 2)[3] + 1);
  const ColorPlanes pa = decompress_to_ycbcr(a);
  const ColorPlanes pb = decompress_to_ycbcr(b);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const bool inside = c == 1 && y >= 8 && y < 16 && x >= 16 && x < 24;
        const double d = std::fabs(pa.planes[size_t(c)].at(y, x) - pb.planes[size_t(c)].at(y, x));
        if (!inside) ASSERT_EQ(d, 0.0) << c << " " << y << " " << x;
      }
  double changed = 0.0;
  for (int y = 8; y < 16; ++y)
    for (int x = 16; x < 24; ++x)
      changed += std::fabs(pa.planes[1].at(y, x) - pb.planes[1].at(y, x));
  EXPECT_GT(changed, 0.0);
}

// 4:2:0 coverage: a hand-built image serialized and re-parsed must keep its
// coefficients, and chroma must upsample by pixel replication.
TEST(Jpeg420, RoundTripAndNearestNeighborUpsampling) {
  JpegImage j;
  j.width = 16;
  j.height = 16;
  j.quant_tables[0].fill(1);
  j.quant_tables[1].fill(1);
  j.quant_present[0] = j.quant_present[1] = true;
  Rng rng(40);
  for (int c = 0; c < 3; ++c) {
    JpegComponent comp;
    comp.id = c + 1;
    comp.h_samp = comp.v_samp = c == 0 ? 2 : 1;
    comp.quant_idx = c == 0 ? 0 : 1;
    comp.blocks_w = comp.blocks_h = c == 0 ? 2 : 1;
    comp.blocks.assign(size_t(comp.blocks_w) * comp.blocks_h, CoeffBlock{});
    for (auto& blk : comp.blocks)
      for (int i = 0; i < 20; ++i)
        blk[rng.below(64)] = int16_t(int(rng.below(21)) - 10);
    j.components.push_back(std::move(comp));
  }

  const JpegImage parsed = parse_jpeg(serialize_jpeg(j));
  ASSERT_EQ(parsed.num_components(), 3);
  for (int c = 0; c < 3; ++c) {
    ASSERT_EQ(parsed.components[size_t(c)].blocks_w, j.components[size_t(c)].blocks_w);
    for (size_t i = 0; i < j.components[size_t(c)].blocks.size(); ++i)
      ASSERT_EQ(parsed.components[size_t(c)].blocks[i], j.components[size_t(c)].blocks[i]);
  }

  const auto native = decompress_planes(parsed);
  EXPECT_EQ(native[0].h, 16);
  EXPECT_EQ(native[1].h, 8);
  EXPECT_EQ(native[1].w, 8);
  const ColorPlanes cp = decompress_to_ycbcr(parsed);
  for (int c = 1; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        ASSERT_EQ(cp.planes[size_t(c)].at(y, x), native[size_t(c)].at(y / 2, x / 2));
}

TEST(JpegEncode, RejectsBadInput) {
  ColorPlanes ycc = make_color_planes(Domain::JpegYcbcr, 8, 8);
  EXPECT_THROW(encode_jpeg(ycc, 75), Error);
  ColorPlanes rgb = make_color_planes(Domain::SpatialRgb, 8, 8);
  EXPECT_THROW(encode_jpeg(rgb, 0), Error);
  EXPECT_THROW(encode_jpeg(rgb, 101), Error);
  rgb.planes[2] = Plane(4, 4);
  EXPECT_THROW(encode_jpeg(rgb, 75), Error);
}

TEST(JpegEncode, DeterministicBytes) {
  const ColorPlanes rgb = textured_rgb(24, 24, 50);
  const EncodedJpeg a = encode_jpeg(rgb, 75);
  const EncodedJpeg b = encode_jpeg(rgb, 75);
  EXPECT_EQ(a.bytes, b.bytes);
}

TEST(JpegParse, NonMultipleOf8Dimensions) {
  const EncodedJpeg enc = encode_jpeg(textured_rgb(17, 23, 51), 85);
  const JpegImage parsed = parse_jpeg(enc.bytes);
  EXPECT_EQ(parsed.width, 23);
  EXPECT_EQ(parsed.height, 17);
  EXPECT_EQ(parsed.components[0].blocks_w, 3);
  EXPECT_EQ(parsed.components[0].blocks_h, 3);
  const ColorPlanes cp = decompress_to_ycbcr(parsed);
  EXPECT_EQ(cp.planes[0].h, 17);
  EXPECT_EQ(cp.planes[0].w, 23);
}
