#pragma once
// Channel representation: the filter bank applied to each color channel
// independently, residual stacks concatenated channel-major into one
// 186-plane tensor. Channels are never mixed or summed here.

#include <vector>

#include "ucnet/filterbank.hpp"
#include "ucnet/image.hpp"

namespace ucnet {

constexpr int kBankSize = 62;
constexpr int kRepPlanes = 3 * kBankSize;  // 186

struct ChannelRep {
  int h = 0, w = 0;
  std::vector<float> maps;  // kRepPlanes * h * w, plane 62*c + k = kernel k of channel c

  float* map(int i) { return maps.data() + size_t(i) * h * w; }
  const float* map(int i) const { return maps.data() + size_t(i) * h * w; }
};

// Splits an interleaved 8-bit RGB image into real-valued planes.
inline ColorPlanes split_rgb(const Image8& img) {
  require(img.c == 3, Errc::invalid_argument,
          "expected a 3-channel image, got " + std::to_string(img.c));
  require(img.h > 0 && img.w > 0, Errc::invalid_argument, "empty image");
  ColorPlanes cp = make_color_planes(Domain::SpatialRgb, img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) cp.planes[size_t(ch)].at(y, x) = img.at(y, x, ch);
  return cp;
}

inline ChannelRep channel_representation(const ColorPlanes& cp, const FilterBank& bank,
                                         const ResidualConfig& cfg) {
  require(int(bank.kernels.size()) == kBankSize, Errc::invalid_argument,
          "filter bank must hold exactly 62 kernels");
  for (const auto& p : cp.planes)
    require(p.h == cp.height && p.w == cp.width, Errc::invalid_argument,
            "color planes must share dimensions");

  ChannelRep rep;
  rep.h = cp.height;
  rep.w = cp.width;
  rep.maps.assign(size_t(kRepPlanes) * rep.h * rep.w, 0.0f);
  const size_t plane_sz = size_t(rep.h) * rep.w;
  for (int ch = 0; ch < 3; ++ch) {
    const ResidualStack stack = apply_bank(cp.planes[size_t(ch)], bank, cfg);
    std::copy(stack.v.begin(), stack.v.end(),
              rep.maps.begin() + size_t(ch) * kBankSize * plane_sz);
  }
  return rep;
}

}  // namespace ucnet
