#pragma once
// Desk-scale embedding simulators: spatial LSB matching and JPEG-coefficient
// +/-1 embedding at a target change rate, plus the payload <-> change-rate
// conversion via ternary entropy.

#include <cmath>

#include "ucnet/image.hpp"
#include "ucnet/jpeg.hpp"
#include "ucnet/rng.hpp"

namespace ucnet {

struct EmbedSpec {
  double payload_alpha = 0.0;     // bits per pixel / per nonzero AC coefficient
  double change_rate_beta = 0.0;  // per-site modification probability, in [0, 1/3]
  uint64_t seed = 0;
};

inline double log2_3() { return 1.584962500721156181; }

// Ternary entropy H3(beta) = -2 beta log2 beta - (1 - 2 beta) log2(1 - 2 beta),
// increasing on [0, 1/3] with H3(0) = 0 and H3(1/3) = log2 3.
inline double ternary_entropy(double beta) {
  require(beta >= 0.0 && beta <= 1.0 / 3.0 + 1e-12, Errc::invalid_argument,
          "beta out of [0, 1/3]");
  auto term = [](double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; };
  return 2.0 * term(beta) + term(1.0 - 2.0 * beta);
}

// Bisection inverse of H3 on [0, 1/3].
inline double inverse_ternary_entropy(double alpha) {
  require(alpha >= 0.0 && alpha <= log2_3() + 1e-12, Errc::invalid_argument,
          "alpha out of [0, log2 3]");
  if (alpha <= 0.0) return 0.0;
  if (alpha >= log2_3()) return 1.0 / 3.0;
  double lo = 0.0, hi = 1.0 / 3.0;
  for (int i = 0; i < 100 && hi - lo > 1e-14; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ternary_entropy(mid) < alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline EmbedSpec embed_spec_from_alpha(double alpha, uint64_t seed) {
  EmbedSpec s;
  s.payload_alpha = alpha;
  s.change_rate_beta = inverse_ternary_entropy(alpha);
  s.seed = seed;
  return s;
}

inline EmbedSpec embed_spec_from_beta(double beta, uint64_t seed) {
  EmbedSpec s;
  s.change_rate_beta = beta;
  s.payload_alpha = ternary_entropy(beta);
  s.seed = seed;
  return s;
}

// LSB matching over all three channels: each pixel is changed with
// probability beta, direction +/-1 equiprobable and forced inward at 0/255.
// Scan order is channel-major then row-major; same (input, seed) gives
// bit-identical output.
inline ColorPlanes lsbm_embed(const ColorPlanes& cover, const EmbedSpec& spec) {
  require(cover.domain == Domain::SpatialRgb, Errc::invalid_argument,
          "LSB matching operates on spatial RGB planes");
  require(spec.change_rate_beta >= 0.0 && spec.change_rate_beta <= 1.0 / 3.0,
          Errc::invalid_argument, "beta out of [0, 1/3]");
  ColorPlanes stego = cover;
  Rng rng(spec.seed);
  for (auto& plane : stego.planes) {
    for (auto& value : plane.v) {
      if (rng.uniform01() >= spec.change_rate_beta) continue;
      double delta = rng.coin() ? 1.0 : -1.0;
      if (value <= 0.0) delta = 1.0;
      if (value >= 255.0) delta = -1.0;
      value += delta;
    }
  }
  return stego;
}

// JPEG-domain simulator: every nonzero AC coefficient is changed +/-1 with
// probability beta (a +/-1 coefficient may move to 0); DC and zero
// coefficients are never touched. Scan order: components, blocks row-major,
// coefficients in natural order.
inline JpegImage jpeg_embed(const JpegImage& cover, const EmbedSpec& spec) {
  require(spec.change_rate_beta >= 0.0 && spec.change_rate_beta <= 1.0 / 3.0,
          Errc::invalid_argument, "beta out of [0, 1/3]");
  JpegImage stego = cover;
  Rng rng(spec.seed);
  for (auto& comp : stego.components) {
    for (auto& blk : comp.blocks) {
      for (int i = 1; i < 64; ++i) {
        if (blk[size_t(i)] == 0) continue;
        if (rng.uniform01() >= spec.change_rate_beta) continue;
        blk[size_t(i)] = int16_t(blk[size_t(i)] + (rng.coin() ? 1 : -1));
      }
    }
  }
  return stego;
}

}  // namespace ucnet
