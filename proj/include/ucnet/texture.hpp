#pragma once
// Synthetic textured covers for desk-scale experiments: a bilinearly
// interpolated coarse luminance grid with per-channel color offsets, an
// oriented sinusoidal texture component and mild sensor-style noise.

#include <algorithm>
#include <cmath>

#include "ucnet/image.hpp"
#include "ucnet/rng.hpp"

namespace ucnet {

inline Image8 synth_textured_cover(int h, int w, uint64_t seed) {
  require(h > 0 && w > 0, Errc::invalid_argument, "bad cover dimensions");
  Rng rng(seed);

  const int step = 8;
  const int gh = h / step + 2, gw = w / step + 2;
  std::vector<double> grid(size_t(gh) * gw);
  for (auto& g : grid) g = 48.0 + 160.0 * rng.uniform01();

  // Per-channel gains/offsets keep the channels correlated but not identical.
  double gain[3], offs[3];
  for (int ch = 0; ch < 3; ++ch) {
    gain[ch] = 0.75 + 0.5 * rng.uniform01();
    offs[ch] = -24.0 + 48.0 * rng.uniform01();
  }

  // One oriented sinusoid per image adds mid-frequency content.
  const double amp = 3.0 + 7.0 * rng.uniform01();
  const double ang = 6.283185307179586 * rng.uniform01();
  const double freq = 0.25 + 0.65 * rng.uniform01();
  const double fy = freq * std::sin(ang), fx = freq * std::cos(ang);
  const double phase = 6.283185307179586 * rng.uniform01();
  const double noise_sigma = 0.8 + 1.2 * rng.uniform01();

  Image8 img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    const int gy = y / step;
    const double ty = double(y % step) / step;
    for (int x = 0; x < w; ++x) {
      const int gx = x / step;
      const double tx = double(x % step) / step;
      const double a = grid[size_t(gy) * gw + gx];
      const double b = grid[size_t(gy) * gw + gx + 1];
      const double c = grid[size_t(gy + 1) * gw + gx];
      const double d = grid[size_t(gy + 1) * gw + gx + 1];
      const double base = a * (1 - ty) * (1 - tx) + b * (1 - ty) * tx +
                          c * ty * (1 - tx) + d * ty * tx;
      const double wave = amp * std::sin(fx * x + fy * y + phase);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = gain[ch] * (base + wave) + offs[ch] + noise_sigma * rng.normal();
        img.at(y, x, ch) = uint8_t(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return img;
}

}  // namespace ucnet
