#pragma once
// The fixed 62-kernel high-pass bank used by the preprocessing stage:
// 30 SRM basic linear predictors plus 32 Gabor kernels, all on 5x5 support,
// all zero-DC. Residuals are correlation-oriented (no kernel flip), clamped
// to [-T, +T].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ucnet/common.hpp"
#include "ucnet/image.hpp"

namespace ucnet {

enum class KernelFamily {
  Srm1st,
  Srm2nd,
  Srm3rd,
  SrmSquare3,
  SrmSquare5,
  SrmEdge3,
  SrmEdge5,
  Gabor,
};

inline const char* kernel_family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::Srm1st: return "SRM_1ST";
    case KernelFamily::Srm2nd: return "SRM_2ND";
    case KernelFamily::Srm3rd: return "SRM_3RD";
    case KernelFamily::SrmSquare3: return "SRM_SQUARE3";
    case KernelFamily::SrmSquare5: return "SRM_SQUARE5";
    case KernelFamily::SrmEdge3: return "SRM_EDGE3";
    case KernelFamily::SrmEdge5: return "SRM_EDGE5";
    case KernelFamily::Gabor: return "GABOR";
  }
  return "?";
}

struct Kernel {
  std::array<double, 25> taps{};  // row-major 5x5, taps[(dy+2)*5 + (dx+2)]
  double normalizer = 1.0;
  KernelFamily family = KernelFamily::Srm1st;
  int index_in_family = 0;

  double& tap(int dy, int dx) { return taps[size_t(dy + 2) * 5 + (dx + 2)]; }
  double tap(int dy, int dx) const { return taps[size_t(dy + 2) * 5 + (dx + 2)]; }
};

struct FilterBank {
  std::vector<Kernel> kernels;  // SRM families first, then Gabor by (scale, orientation)
};

enum class PadMode { Zero, Reflect };

struct ResidualConfig {
  double truncation_t = 3.0;  // clamp bound, must be > 0
  PadMode pad_mode = PadMode::Zero;
};

namespace detail {

// Compass offsets in math-style order: E, NE, N, NW, W, SW, S, SE.
// (dy, dx) with y growing downwards.
inline constexpr std::array<std::array<int, 2>, 8> kCompass = {{
    {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1},
}};

inline Kernel rotate90(const Kernel& k) {
  // Clockwise quarter turn: out(dy, dx) = in(-dx, dy).
  Kernel out = k;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) out.tap(dy, dx) = k.tap(-dx, dy);
  return out;
}

}  // namespace detail

// The 30 SRM basic linear kernels, embedded centered in 5x5 support.
// Orderings within each family are fixed: compass order for directional
// kernels, [horizontal, vertical, diagonal, anti-diagonal] for second order,
// [N, E, S, W] for the edge kernels.
inline std::vector<Kernel> srm_kernels() {
  using detail::kCompass;
  std::vector<Kernel> out;
  out.reserve(30);

  // First order: x(p + d) - x(p), normalizer 1.
  for (int i = 0; i < 8; ++i) {
    Kernel k;
    k.family = KernelFamily::Srm1st;
    k.index_in_family = i;
    k.normalizer = 1.0;
    k.tap(kCompass[i][0], kCompass[i][1]) = 1.0;
    k.tap(0, 0) = -1.0;
    out.push_back(k);
  }

  // Second order: [1, -2, 1] along four orientations, normalizer 2.
  const std::array<std::array<int, 2>, 4> axes = {{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
  for (int i = 0; i < 4; ++i) {
    Kernel k;
    k.family = KernelFamily::Srm2nd;
    k.index_in_family = i;
    k.normalizer = 2.0;
    k.tap(-axes[i][0], -axes[i][1]) = 1.0;
    k.tap(0, 0) = -2.0;
    k.tap(axes[i][0], axes[i][1]) = 1.0;
    out.push_back(k);
  }

  // Third order: [1, -3, 3, -1] at offsets [-d, 0, d, 2d], normalizer 3.
  for (int i = 0; i < 8; ++i) {
    Kernel k;
    k.family = KernelFamily::Srm3rd;
    k.index_in_family = i;
    k.normalizer = 3.0;
    const int dy = kCompass[i][0], dx = kCompass[i][1];
    k.tap(-dy, -dx) = 1.0;
    k.tap(0, 0) = -3.0;
    k.tap(dy, dx) = 3.0;
    k.tap(2 * dy, 2 * dx) = -1.0;
    out.push_back(k);
  }

  // SQUARE 3x3, normalizer 4.
  {
    Kernel k;
    k.family = KernelFamily::SrmSquare3;
    k.index_in_family = 0;
    k.normalizer = 4.0;
    const int sq3[3][3] = {{-1, 2, -1}, {2, -4, 2}, {-1, 2, -1}};
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) k.tap(y - 1, x - 1) = sq3[y][x];
    out.push_back(k);
  }

  // SQUARE 5x5, normalizer 12.
  const int sq5[5][5] = {{-1, 2, -2, 2, -1},
                         {2, -6, 8, -6, 2},
                         {-2, 8, -12, 8, -2},
                         {2, -6, 8, -6, 2},
                         {-1, 2, -2, 2, -1}};
  {
    Kernel k;
    k.family = KernelFamily::SrmSquare5;
    k.index_in_family = 0;
    k.normalizer = 12.0;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) k.tap(y - 2, x - 2) = sq5[y][x];
    out.push_back(k);
  }

  // EDGE 3x3: square 3x3 with the bottom row zeroed, rotated N, E, S, W.
  {
    Kernel n;
    n.family = KernelFamily::SrmEdge3;
    n.index_in_family = 0;
    n.normalizer = 4.0;
    const int e3[3][3] = {{-1, 2, -1}, {2, -4, 2}, {0, 0, 0}};
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) n.tap(y - 1, x - 1) = e3[y][x];
    Kernel k = n;
    for (int i = 0; i < 4; ++i) {
      k.index_in_family = i;
      out.push_back(k);
      k = detail::rotate90(k);
    }
  }

  // EDGE 5x5: square 5x5 with the bottom two rows zeroed, rotated N, E, S, W.
  {
    Kernel n;
    n.family = KernelFamily::SrmEdge5;
    n.index_in_family = 0;
    n.normalizer = 12.0;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 5; ++x) n.tap(y - 2, x - 2) = sq5[y][x];
    Kernel k = n;
    for (int i = 0; i < 4; ++i) {
      k.index_in_family = i;
      out.push_back(k);
      k = detail::rotate90(k);
    }
  }

  return out;
}

// Gabor kernels sampled on the 5x5 integer grid:
//   g(x, y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + phase)
// with x' = x cos(theta) + y sin(theta), y' = -x sin(theta) + y cos(theta) and
// lambda = 2 sigma. The sample mean is subtracted from each kernel, so every
// kernel is exactly zero-DC; normalizer is 1.
inline std::vector<Kernel> gabor_kernels(const std::vector<double>& sigmas, int orientations,
                                         double gamma, double phase) {
  require(int(sigmas.size()) * orientations == 32, Errc::invalid_argument,
          "gabor parameter grid must contain exactly 32 kernels");
  require(orientations > 0, Errc::invalid_argument, "orientations must be positive");
  const double pi = 3.14159265358979323846;
  std::vector<Kernel> out;
  out.reserve(32);
  int index = 0;
  for (double sigma : sigmas) {
    require(sigma > 0, Errc::invalid_argument, "sigma must be positive");
    const double lambda = 2.0 * sigma;
    for (int o = 0; o < orientations; ++o) {
      const double theta = double(o) * pi / double(orientations);
      const double ct = std::cos(theta), st = std::sin(theta);
      Kernel k;
      k.family = KernelFamily::Gabor;
      k.index_in_family = index++;
      k.normalizer = 1.0;
      double sum = 0.0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const double x = dx, y = dy;
          const double xr = x * ct + y * st;
          const double yr = -x * st + y * ct;
          const double env = std::exp(-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma));
          const double val = env * std::cos(2.0 * pi * xr / lambda + phase);
          k.tap(dy, dx) = val;
          sum += val;
        }
      }
      const double mean = sum / 25.0;
      for (auto& t : k.taps) t -= mean;
      out.push_back(k);
    }
  }
  return out;
}

inline std::vector<double> default_gabor_sigmas() { return {0.5, 0.75, 1.0, 1.25}; }

// All 62 fixed kernels in their canonical order.
inline FilterBank full_bank() {
  FilterBank bank;
  bank.kernels = srm_kernels();
  auto gabor = gabor_kernels(default_gabor_sigmas(), 8, 0.5, 0.0);
  bank.kernels.insert(bank.kernels.end(), gabor.begin(), gabor.end());
  return bank;
}

struct ResidualStack {
  int count = 0, h = 0, w = 0;
  std::vector<float> v;  // count * h * w, kernel-major

  float* map(int k) { return v.data() + size_t(k) * h * w; }
  const float* map(int k) const { return v.data() + size_t(k) * h * w; }
};

namespace detail {

// Plane padded by 2 on every side so kernel application needs no bounds checks.
inline std::vector<double> pad_plane(const Plane& p, PadMode mode) {
  const int ph = p.h + 4, pw = p.w + 4;
  std::vector<double> out(size_t(ph) * pw, 0.0);
  auto reflect = [](int i, int n) {
    // Symmetric reflection with edge repeat: -1 -> 0, -2 -> 1, n -> n-1.
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      const int sy = y - 2, sx = x - 2;
      if (sy >= 0 && sy < p.h && sx >= 0 && sx < p.w) {
        out[size_t(y) * pw + x] = p.at(sy, sx);
      } else if (mode == PadMode::Reflect) {
        out[size_t(y) * pw + x] = p.at(reflect(sy, p.h), reflect(sx, p.w));
      }
    }
  }
  return out;
}

struct SparseTap {
  int offset;  // into the padded plane, relative to the padded center
  double value;
};

inline std::vector<SparseTap> sparse_taps(const Kernel& k, int padded_w) {
  std::vector<SparseTap> taps;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      const double v = k.tap(dy, dx);
      if (v != 0.0) taps.push_back({dy * padded_w + dx, v / k.normalizer});
    }
  return taps;
}

}  // namespace detail

// Correlation of `plane` with every normalized kernel, same-size output,
// clamped to [-T, +T]. Accumulation is in double in a fixed order.
inline ResidualStack apply_bank(const Plane& plane, const FilterBank& bank,
                                const ResidualConfig& cfg) {
  require(plane.h >= 5 && plane.w >= 5, Errc::invalid_argument,
          "plane smaller than 5x5 kernel support");
  require(cfg.truncation_t > 0, Errc::invalid_argument, "truncation_T must be > 0");

  const int h = plane.h, w = plane.w, pw = plane.w + 4;
  const std::vector<double> padded = detail::pad_plane(plane, cfg.pad_mode);
  const double t = cfg.truncation_t;

  ResidualStack out;
  out.count = int(bank.kernels.size());
  out.h = h;
  out.w = w;
  out.v.assign(size_t(out.count) * h * w, 0.0f);

  for (int ki = 0; ki < out.count; ++ki) {
    const auto taps = detail::sparse_taps(bank.kernels[size_t(ki)], pw);
    float* dst = out.map(ki);
    for (int y = 0; y < h; ++y) {
      const double* center = padded.data() + size_t(y + 2) * pw + 2;
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& tp : taps) acc += tp.value * center[x + tp.offset];
        dst[size_t(y) * w + x] = float(std::clamp(acc, -t, t));
      }
    }
  }
  return out;
}

// Plain-text export used by `gen-filters`.
inline void write_filter_bank_text(std::ostream& os, const FilterBank& bank) {
  os << "UCNET-FILTERS v1 count=" << bank.kernels.size() << "\n";
  char buf[64];
  for (const auto& k : bank.kernels) {
    os << kernel_family_name(k.family) << ' ' << k.index_in_family;
    std::snprintf(buf, sizeof buf, " %.9g", k.normalizer);
    os << buf;
    for (double t : k.taps) {
      std::snprintf(buf, sizeof buf, " %.9g", t);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace ucnet
