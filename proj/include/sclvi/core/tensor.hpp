#pragma once

#include <cstddef>
#include <vector>

#include "sclvi/core/error.hpp"

namespace sclvi {

// Dense H x W x C feature map, row-major with channels innermost
// (value at (y, x, c) lives at ((y * w + x) * c_count + c)). This is the
// activation layout used throughout the conv stack: each spatial position
// is a contiguous channel fiber, so im2col reduces to strip copies and the
// conv GEMM maps directly onto [pixels x (k*k*C)] matrices.
template <typename T>
struct FeatMap {
  int h = 0, w = 0, c = 0;
  std::vector<T> v;

  FeatMap() = default;
  FeatMap(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, T(0)) {}

  void resize(int h_, int w_, int c_) {
    h = h_;
    w = w_;
    c = c_;
    v.assign(static_cast<std::size_t>(h_) * w_ * c_, T(0));
  }

  std::size_t size() const { return v.size(); }
  int pixels() const { return h * w; }

  T& at(int y, int x, int ch) { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  const T& at(int y, int x, int ch) const { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  template <typename U>
  FeatMap<U> cast() const {
    FeatMap<U> out(h, w, c);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

}  // namespace sclvi
