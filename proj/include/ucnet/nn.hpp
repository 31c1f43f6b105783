#pragma once
// Layer kernels with explicit backward passes: grouped 2-D convolution
// (correlation orientation), batch normalization, ReLU, global average
// pooling, fully connected, softmax cross-entropy.
//
// Determinism contract: every accumulation runs in a fixed order. Worker
// threads only ever produce disjoint output slots (per batch item or per
// channel); cross-item reductions are serial in index order, so results are
// bit-identical for any worker count.

#include <cmath>
#include <optional>
#include <vector>

#include "ucnet/parallel.hpp"
#include "ucnet/tensor.hpp"

namespace ucnet {

enum class Mode { Train, Eval };

namespace nndetail {

// C(MxN) += A(MxK) * B(KxN), row-major, accumulation over k in ascending
// order for every output element regardless of the loop order chosen.
template <typename T>
void gemm_acc(int m, int n, int k, const T* a, const T* b, T* c) {
  const size_t c_bytes = size_t(m) * n * sizeof(T);
  const size_t b_bytes = size_t(k) * n * sizeof(T);
  if (c_bytes <= (1u << 20) && b_bytes > c_bytes) {
    // C-resident order: stream B once, keep C hot.
    for (int kk = 0; kk < k; ++kk) {
      const T* brow = b + size_t(kk) * n;
      for (int i = 0; i < m; ++i) {
        const T aik = a[size_t(i) * k + kk];
        T* crow = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    const T* arow = a + size_t(i) * k;
    T* crow = c + size_t(i) * n;
    int kk = 0;
    for (; kk + 4 <= k; kk += 4) {
      const T a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
      const T* b0 = b + size_t(kk) * n;
      const T* b1 = b0 + n;
      const T* b2 = b1 + n;
      const T* b3 = b2 + n;
      for (int j = 0; j < n; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; kk < k; ++kk) {
      const T ak = arow[kk];
      const T* brow = b + size_t(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += ak * brow[j];
    }
  }
}

}  // namespace nndetail

template <typename T>
struct ConvParams {
  Tensor<T> weights;    // (c_out, c_in/groups, k, k)
  std::vector<T> bias;  // empty means no bias
  int stride = 1;
  int pad = 0;
  int groups = 1;

  int c_out() const { return weights.n; }
  int c_in() const { return weights.c * groups; }
  int ksize() const { return weights.h; }
};

namespace nndetail {

template <typename T>
void check_conv(const Tensor<T>& x, const ConvParams<T>& p) {
  const int k = p.ksize();
  require(p.weights.h == p.weights.w && k % 2 == 1, Errc::invalid_argument,
          "conv kernel must be square with odd size");
  require(p.stride == 1 || p.stride == 2, Errc::invalid_argument, "conv stride must be 1 or 2");
  require(p.pad >= 0, Errc::invalid_argument, "conv pad must be >= 0");
  require(p.groups >= 1 && p.c_out() % p.groups == 0, Errc::invalid_argument,
          "groups must divide c_out");
  require(x.c == p.c_in(), Errc::invalid_argument, "conv input channel mismatch");
  require(p.bias.empty() || int(p.bias.size()) == p.c_out(), Errc::invalid_argument,
          "conv bias size mismatch");
  require(x.h + 2 * p.pad >= k && x.w + 2 * p.pad >= k, Errc::invalid_argument,
          "conv input smaller than kernel");
}

inline int conv_out_dim(int in, int pad, int k, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

// col(K x P) with K = c_in_g * k * k, P = ho * wo.
template <typename T>
void im2col(const T* x, int c_in_g, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* col) {
  for (int ci = 0; ci < c_in_g; ++ci) {
    const T* src = x + size_t(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (size_t(ci) * k * k + size_t(ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int sy = oy * stride + ky - pad;
          if (sy < 0 || sy >= h) {
            for (int ox = 0; ox < wo; ++ox) dst[size_t(oy) * wo + ox] = T(0);
            continue;
          }
          const int sx0 = kx - pad;
          for (int ox = 0; ox < wo; ++ox) {
            const int sx = ox * stride + sx0;
            dst[size_t(oy) * wo + ox] =
                (sx >= 0 && sx < w) ? src[size_t(sy) * w + sx] : T(0);
          }
        }
      }
    }
  }
}

// colT(P x K): transposed patch matrix, built directly.
template <typename T>
void im2colT(const T* x, int c_in_g, int h, int w, int k, int stride, int pad, int ho, int wo,
             T* colt) {
  const int kk = c_in_g * k * k;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T* dst = colt + (size_t(oy) * wo + ox) * kk;
      int idx = 0;
      for (int ci = 0; ci < c_in_g; ++ci) {
        const T* src = x + size_t(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
          const int sy = oy * stride + ky - pad;
          for (int kx = 0; kx < k; ++kx, ++idx) {
            const int sx = ox * stride + kx - pad;
            dst[idx] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? src[size_t(sy) * w + sx] : T(0);
          }
        }
      }
    }
  }
}

}  // namespace nndetail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p, int workers = 1) {
  using namespace nndetail;
  check_conv(x, p);
  const int k = p.ksize(), g = p.groups;
  const int c_in_g = p.weights.c, c_out_g = p.c_out() / g;
  const int ho = conv_out_dim(x.h, p.pad, k, p.stride);
  const int wo = conv_out_dim(x.w, p.pad, k, p.stride);
  const int pc = c_in_g * k * k;  // patch length
  const int pn = ho * wo;
  const bool direct = k == 1 && p.stride == 1 && p.pad == 0;

  Tensor<T> out(x.n, p.c_out(), ho, wo);
  parallel_for(x.n, workers, [&](int n) {
    std::vector<T> col;
    if (!direct) col.resize(size_t(pc) * pn);
    for (int gi = 0; gi < g; ++gi) {
      const T* xg = x.plane(n, gi * c_in_g);
      const T* b = xg;
      if (!direct) {
        im2col(xg, c_in_g, x.h, x.w, k, p.stride, p.pad, ho, wo, col.data());
        b = col.data();
      }
      gemm_acc(c_out_g, pn, pc, p.weights.data() + size_t(gi) * c_out_g * pc, b,
               out.plane(n, gi * c_out_g));
    }
    if (!p.bias.empty()) {
      for (int c = 0; c < p.c_out(); ++c) {
        T* dst = out.plane(n, c);
        const T bv = p.bias[size_t(c)];
        for (int i = 0; i < pn; ++i) dst[i] += bv;
      }
    }
  });
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> x;
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_grad(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& grad_out,
                         int workers = 1) {
  using namespace nndetail;
  check_conv(x, p);
  const int k = p.ksize(), g = p.groups;
  const int c_in_g = p.weights.c, c_out_g = p.c_out() / g;
  const int ho = conv_out_dim(x.h, p.pad, k, p.stride);
  const int wo = conv_out_dim(x.w, p.pad, k, p.stride);
  require(grad_out.n == x.n && grad_out.c == p.c_out() && grad_out.h == ho && grad_out.w == wo,
          Errc::invalid_argument, "conv grad_out shape mismatch");
  const int pc = c_in_g * k * k;
  const int pn = ho * wo;
  const bool direct = k == 1 && p.stride == 1 && p.pad == 0;

  ConvGrads<T> grads;
  grads.x = Tensor<T>(x.n, x.c, x.h, x.w);
  grads.weights = Tensor<T>(p.weights.n, p.weights.c, p.weights.h, p.weights.w);
  if (!p.bias.empty()) grads.bias.assign(p.bias.size(), T(0));

  // Transposed weights per group for the data gradient.
  std::vector<T> wt(size_t(g) * pc * c_out_g);
  for (int gi = 0; gi < g; ++gi) {
    const T* wsrc = p.weights.data() + size_t(gi) * c_out_g * pc;
    T* wdst = wt.data() + size_t(gi) * pc * c_out_g;
    for (int i = 0; i < c_out_g; ++i)
      for (int j = 0; j < pc; ++j) wdst[size_t(j) * c_out_g + i] = wsrc[size_t(i) * pc + j];
  }

  // Per-item weight-gradient partials, reduced serially afterwards.
  std::vector<std::vector<T>> wg_partial(size_t(x.n));

  parallel_for(x.n, workers, [&](int n) {
    std::vector<T> colt(size_t(pn) * pc);
    std::vector<T> grad_col(size_t(pc) * pn);
    wg_partial[size_t(n)].assign(p.weights.size(), T(0));
    for (int gi = 0; gi < g; ++gi) {
      const T* xg = x.plane(n, gi * c_in_g);
      const T* gout = grad_out.plane(n, gi * c_out_g);

      // dW_g = gout(c_out_g x P) * colT(P x K)
      im2colT(xg, c_in_g, x.h, x.w, k, p.stride, p.pad, ho, wo, colt.data());
      gemm_acc(c_out_g, pc, pn, gout, colt.data(),
               wg_partial[size_t(n)].data() + size_t(gi) * c_out_g * pc);

      // dX_g via grad_col = W_g^T (K x c_out_g) * gout (c_out_g x P)
      std::fill(grad_col.begin(), grad_col.end(), T(0));
      gemm_acc(pc, pn, c_out_g, wt.data() + size_t(gi) * pc * c_out_g, gout, grad_col.data());
      T* gx = grads.x.plane(n, gi * c_in_g);
      if (direct) {
        for (size_t i = 0; i < size_t(pc) * pn; ++i) gx[i] += grad_col[i];
      } else {
        for (int ci = 0; ci < c_in_g; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const T* src = grad_col.data() + (size_t(ci) * k * k + size_t(ky) * k + kx) * pn;
              T* dst = gx + size_t(ci) * x.h * x.w;
              for (int oy = 0; oy < ho; ++oy) {
                const int sy = oy * p.stride + ky - p.pad;
                if (sy < 0 || sy >= x.h) continue;
                for (int ox = 0; ox < wo; ++ox) {
                  const int sx = ox * p.stride + kx - p.pad;
                  if (sx >= 0 && sx < x.w) dst[size_t(sy) * x.w + sx] += src[size_t(oy) * wo + ox];
                }
              }
            }
          }
        }
      }
    }
  });

  // Fixed-order reductions over batch items.
  for (int n = 0; n < x.n; ++n) {
    const auto& part = wg_partial[size_t(n)];
    for (size_t i = 0; i < grads.weights.size(); ++i) grads.weights.v[i] += part[i];
  }
  if (!p.bias.empty()) {
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < p.c_out(); ++c) {
        const T* gout = grad_out.plane(n, c);
        T acc(0);
        for (int i = 0; i < pn; ++i) acc += gout[i];
        grads.bias[size_t(c)] += acc;
      }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
struct BnParams {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.9);  // running <- momentum * running + (1 - momentum) * batch
  T epsilon = T(1e-5);
};

template <typename T>
BnParams<T> make_bn(int channels) {
  BnParams<T> p;
  p.gamma.assign(size_t(channels), T(1));
  p.beta.assign(size_t(channels), T(0));
  p.running_mean.assign(size_t(channels), T(0));
  p.running_var.assign(size_t(channels), T(1));
  return p;
}

template <typename T>
struct BnCache {
  Mode mode = Mode::Train;
  std::vector<T> mean, inv_std;
  Tensor<T> xhat;
  int m = 0;  // N * H * W
};

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BnParams<T>& p, Mode mode, BnCache<T>* cache = nullptr,
                     int workers = 1) {
  require(int(p.gamma.size()) == x.c && int(p.beta.size()) == x.c &&
              int(p.running_mean.size()) == x.c && int(p.running_var.size()) == x.c,
          Errc::invalid_argument, "batch-norm channel mismatch");
  require(p.epsilon > T(0), Errc::invalid_argument, "epsilon must be > 0");
  const int m = x.n * x.h * x.w;
  const int hw = x.h * x.w;
  Tensor<T> out(x.n, x.c, x.h, x.w);

  if (mode == Mode::Train) {
    require(m >= 2, Errc::invalid_argument,
            "batch norm in TRAIN mode needs N*H*W >= 2 per channel");
    if (cache) {
      cache->mode = Mode::Train;
      cache->mean.assign(size_t(x.c), T(0));
      cache->inv_std.assign(size_t(x.c), T(0));
      cache->xhat = Tensor<T>(x.n, x.c, x.h, x.w);
      cache->m = m;
    }
    std::vector<T> means(size_t(x.c)), inv_stds(size_t(x.c));
    parallel_for(x.c, workers, [&](int c) {
      double sum = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const T* src = x.plane(n, c);
        for (int i = 0; i < hw; ++i) sum += double(src[i]);
      }
      const double mean = sum / m;
      double var_sum = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const T* src = x.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          const double d = double(src[i]) - mean;
          var_sum += d * d;
        }
      }
      const double var = var_sum / m;  // biased, used for both normalization and running stats
      const double inv_std = 1.0 / std::sqrt(var + double(p.epsilon));
      means[size_t(c)] = T(mean);
      inv_stds[size_t(c)] = T(inv_std);
      const T gc = p.gamma[size_t(c)], bc = p.beta[size_t(c)];
      for (int n = 0; n < x.n; ++n) {
        const T* src = x.plane(n, c);
        T* dst = out.plane(n, c);
        T* xh = cache ? cache->xhat.plane(n, c) : nullptr;
        for (int i = 0; i < hw; ++i) {
          const T xhat = T((double(src[i]) - mean) * inv_std);
          if (xh) xh[i] = xhat;
          dst[i] = gc * xhat + bc;
        }
      }
      p.running_mean[size_t(c)] = p.momentum * p.running_mean[size_t(c)] + (T(1) - p.momentum) * T(mean);
      p.running_var[size_t(c)] = p.momentum * p.running_var[size_t(c)] + (T(1) - p.momentum) * T(var);
    });
    if (cache) {
      cache->mean = means;
      cache->inv_std = inv_stds;
    }
  } else {
    parallel_for(x.c, workers, [&](int c) {
      require(p.running_var[size_t(c)] >= T(0), Errc::invalid_argument, "negative running_var");
      const T inv_std = T(1.0 / std::sqrt(double(p.running_var[size_t(c)]) + double(p.epsilon)));
      const T mean = p.running_mean[size_t(c)];
      const T gc = p.gamma[size_t(c)], bc = p.beta[size_t(c)];
      for (int n = 0; n < x.n; ++n) {
        const T* src = x.plane(n, c);
        T* dst = out.plane(n, c);
        for (int i = 0; i < hw; ++i) dst[i] = gc * (src[i] - mean) * inv_std + bc;
      }
    });
    if (cache) {
      cache->mode = Mode::Eval;
      cache->m = m;
    }
  }
  return out;
}

template <typename T>
struct BnGrads {
  Tensor<T> x;
  std::vector<T> gamma, beta;
};

template <typename T>
BnGrads<T> batch_norm_grad(const BnParams<T>& p, const BnCache<T>& cache,
                           const Tensor<T>& grad_out, int workers = 1) {
  require(cache.mode == Mode::Train, Errc::invalid_argument,
          "batch_norm_grad requires a TRAIN-mode cache");
  const Tensor<T>& xhat = cache.xhat;
  require(grad_out.same_shape(xhat), Errc::invalid_argument, "bn grad_out shape mismatch");
  const int hw = xhat.h * xhat.w;
  const T m = T(cache.m);

  BnGrads<T> g;
  g.x = Tensor<T>(xhat.n, xhat.c, xhat.h, xhat.w);
  g.gamma.assign(size_t(xhat.c), T(0));
  g.beta.assign(size_t(xhat.c), T(0));

  parallel_for(xhat.c, workers, [&](int c) {
    double dbeta = 0.0, dgamma = 0.0;
    for (int n = 0; n < xhat.n; ++n) {
      const T* dy = grad_out.plane(n, c);
      const T* xh = xhat.plane(n, c);
      for (int i = 0; i < hw; ++i) {
        dbeta += double(dy[i]);
        dgamma += double(dy[i]) * double(xh[i]);
      }
    }
    g.beta[size_t(c)] = T(dbeta);
    g.gamma[size_t(c)] = T(dgamma);
    const T k = p.gamma[size_t(c)] * cache.inv_std[size_t(c)];
    const T mean_dy = T(dbeta) / m;
    const T mean_dyxh = T(dgamma) / m;
    for (int n = 0; n < xhat.n; ++n) {
      const T* dy = grad_out.plane(n, c);
      const T* xh = xhat.plane(n, c);
      T* dx = g.x.plane(n, c);
      for (int i = 0; i < hw; ++i) dx[i] = k * (dy[i] - mean_dy - xh[i] * mean_dyxh);
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise / pooling / classifier layers

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_grad(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require(grad_out.same_shape(x), Errc::invalid_argument, "relu grad shape mismatch");
  Tensor<T> out(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > T(0) ? grad_out.v[i] : T(0);
  return out;
}

// (N, C, H, W) -> (N, C, 1, 1), mean over H*W.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, 1, 1);
  const int hw = x.h * x.w;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      double acc = 0.0;
      const T* src = x.plane(n, c);
      for (int i = 0; i < hw; ++i) acc += double(src[i]);
      out.at(n, c, 0, 0) = T(acc / hw);
    }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_grad(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require(grad_out.n == x.n && grad_out.c == x.c && grad_out.h == 1 && grad_out.w == 1,
          Errc::invalid_argument, "gap grad shape mismatch");
  Tensor<T> out(x.n, x.c, x.h, x.w);
  const int hw = x.h * x.w;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const T g = grad_out.at(n, c, 0, 0) / T(hw);
      T* dst = out.plane(n, c);
      for (int i = 0; i < hw; ++i) dst[i] = g;
    }
  return out;
}

// x: (N, C, 1, 1), weights: (C, classes, 1, 1), bias: classes.
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights,
                          const std::vector<T>& bias) {
  require(x.h == 1 && x.w == 1, Errc::invalid_argument, "fc input must be (N, C, 1, 1)");
  require(weights.n == x.c && weights.h == 1 && weights.w == 1, Errc::invalid_argument,
          "fc weight shape mismatch");
  const int classes = weights.c;
  require(int(bias.size()) == classes, Errc::invalid_argument, "fc bias size mismatch");
  Tensor<T> out(x.n, classes, 1, 1);
  for (int n = 0; n < x.n; ++n)
    for (int j = 0; j < classes; ++j) {
      double acc = double(bias[size_t(j)]);
      for (int c = 0; c < x.c; ++c)
        acc += double(x.at(n, c, 0, 0)) * double(weights.at(c, j, 0, 0));
      out.at(n, j, 0, 0) = T(acc);
    }
  return out;
}

template <typename T>
struct FcGrads {
  Tensor<T> x;
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
FcGrads<T> fully_connected_grad(const Tensor<T>& x, const Tensor<T>& weights,
                                const Tensor<T>& grad_out) {
  const int classes = weights.c;
  require(grad_out.n == x.n && grad_out.c == classes && grad_out.h == 1 && grad_out.w == 1,
          Errc::invalid_argument, "fc grad_out shape mismatch");
  FcGrads<T> g;
  g.x = Tensor<T>(x.n, x.c, 1, 1);
  g.weights = Tensor<T>(weights.n, weights.c, 1, 1);
  g.bias.assign(size_t(classes), T(0));
  for (int n = 0; n < x.n; ++n)
    for (int j = 0; j < classes; ++j) {
      const T go = grad_out.at(n, j, 0, 0);
      g.bias[size_t(j)] += go;
      for (int c = 0; c < x.c; ++c) {
        g.weights.at(c, j, 0, 0) += x.at(n, c, 0, 0) * go;
        g.x.at(n, c, 0, 0) += weights.at(c, j, 0, 0) * go;
      }
    }
  return g;
}

template <typename T>
struct SoftmaxLoss {
  T loss = T(0);               // mean cross-entropy over the batch
  Tensor<T> grad_logits;       // d loss / d logits
  std::vector<T> probs;        // row-major (N, classes) softmax probabilities
};

// Numerically stable softmax cross-entropy for integer labels.
template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  require(logits.h == 1 && logits.w == 1, Errc::invalid_argument,
          "logits must be (N, classes, 1, 1)");
  require(int(labels.size()) == logits.n, Errc::invalid_argument, "label count mismatch");
  const int classes = logits.c;
  SoftmaxLoss<T> out;
  out.grad_logits = Tensor<T>(logits.n, classes, 1, 1);
  out.probs.assign(size_t(logits.n) * classes, T(0));
  double loss = 0.0;
  for (int n = 0; n < logits.n; ++n) {
    const int label = labels[size_t(n)];
    require(label >= 0 && label < classes, Errc::invalid_argument,
            "label out of range: " + std::to_string(label));
    double mx = double(logits.at(n, 0, 0, 0));
    for (int j = 1; j < classes; ++j) mx = std::max(mx, double(logits.at(n, j, 0, 0)));
    double denom = 0.0;
    for (int j = 0; j < classes; ++j) denom += std::exp(double(logits.at(n, j, 0, 0)) - mx);
    const double log_denom = std::log(denom);
    for (int j = 0; j < classes; ++j) {
      const double z = double(logits.at(n, j, 0, 0)) - mx;
      const double prob = std::exp(z - log_denom);
      out.probs[size_t(n) * classes + j] = T(prob);
      out.grad_logits.at(n, j, 0, 0) = T((prob - (j == label ? 1.0 : 0.0)) / logits.n);
      if (j == label) loss -= z - log_denom;
    }
  }
  out.loss = T(loss / logits.n);
  return out;
}

}  // namespace ucnet
