#pragma once
// Dense NCHW tensor. float is the working precision; double instantiations
// exist for finite-difference gradient checking.

#include <cstddef>
#include <vector>

#include "ucnet/common.hpp"

namespace ucnet {

template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, T(0)) {
    require(n_ >= 1 && c_ >= 1 && h_ >= 1 && w_ >= 1, Errc::invalid_argument,
            "tensor dims must be >= 1");
  }

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  size_t idx(int in, int ic, int iy, int ix) const {
    return ((size_t(in) * c + ic) * h + iy) * w + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return v[idx(in, ic, iy, ix)]; }
  const T& at(int in, int ic, int iy, int ix) const { return v[idx(in, ic, iy, ix)]; }

  // Pointer to the (n, c) spatial plane.
  T* plane(int in, int ic) { return v.data() + (size_t(in) * c + ic) * h * w; }
  const T* plane(int in, int ic) const { return v.data() + (size_t(in) * c + ic) * h * w; }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& a) {
  Tensor<To> out(a.n, a.c, a.h, a.w);
  for (size_t i = 0; i < a.size(); ++i) out.v[i] = To(a.v[i]);
  return out;
}

}  // namespace ucnet
