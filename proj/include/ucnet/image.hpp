#pragma once
// 8-bit interleaved raster and real-valued planes.

#include <array>
#include <cstdint>
#include <vector>

#include "ucnet/common.hpp"

namespace ucnet {

// Interleaved 8-bit image, row-major, `c` samples per pixel.
struct Image8 {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> pix;

  Image8() = default;
  Image8(int h_, int w_, int c_) : h(h_), w(w_), c(c_), pix(size_t(h_) * w_ * c_, 0) {}

  uint8_t& at(int y, int x, int ch) { return pix[(size_t(y) * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch) const { return pix[(size_t(y) * w + x) * c + ch]; }
};

// One real-valued plane. Values are kept as doubles so decompressed JPEG
// samples stay unrounded.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * w_, 0.0) {}

  double& at(int y, int x) { return v[size_t(y) * w + x]; }
  double at(int y, int x) const { return v[size_t(y) * w + x]; }
};

enum class Domain { SpatialRgb, JpegYcbcr };

inline const char* domain_name(Domain d) {
  return d == Domain::SpatialRgb ? "spatial" : "jpeg";
}

inline Domain domain_from_name(const std::string& s) {
  if (s == "spatial") return Domain::SpatialRgb;
  if (s == "jpeg") return Domain::JpegYcbcr;
  fail(Errc::invalid_argument, "unknown domain '" + s + "' (expected spatial|jpeg)");
}

// Three same-sized planes in the embedding color space of `domain`:
// R,G,B for spatial covers, Y,Cb,Cr (unrounded, level-shifted) for JPEG.
struct ColorPlanes {
  Domain domain = Domain::SpatialRgb;
  std::array<Plane, 3> planes;
  int height = 0, width = 0;
};

inline ColorPlanes make_color_planes(Domain d, int h, int w) {
  ColorPlanes cp;
  cp.domain = d;
  cp.height = h;
  cp.width = w;
  for (auto& p : cp.planes) p = Plane(h, w);
  return cp;
}

}  // namespace ucnet
