#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sclvi/core/error.hpp"
#include "sclvi/core/tensor.hpp"

namespace sclvi::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapMC = Eigen::Map<const MatRM<T>>;

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> w;

  std::size_t count() const { return w.size(); }

  void init(const std::vector<int>& shp, T fill = T(0)) {
    shape = shp;
    std::size_t n = 1;
    for (int d : shp) n *= static_cast<std::size_t>(d);
    w.assign(n, fill);
  }
};

// Per-thread gradient accumulators, index-aligned with a model's params().
template <typename T>
struct GradStore {
  std::vector<std::vector<T>> g;

  template <typename ParamList>
  void init(const ParamList& params) {
    g.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) g[i].assign(params[i]->count(), T(0));
  }
  void zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), T(0));
  }
  void add(const GradStore& other) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] += other.g[i][j];
  }
};

struct ConvGeom {
  int kh = 1, kw = 1, stride = 1, pad = 0;
};

inline int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Expands in ([H*W, C] fibers) into col rows [OH*OW, kh*kw*C]; each (ky,kx)
// tap is a contiguous C-strip, zero-filled where the tap falls outside.
template <typename T>
void im2col(const FeatMap<T>& in, const ConvGeom& g, MatRM<T>& col) {
  const int oh = conv_out_dim(in.h, g.kh, g.stride, g.pad);
  const int ow = conv_out_dim(in.w, g.kw, g.stride, g.pad);
  const int kkc = g.kh * g.kw * in.c;
  col.resize(static_cast<Eigen::Index>(oh) * ow, kkc);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* row = col.data() + (static_cast<std::size_t>(oy) * ow + ox) * kkc;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          T* dst = row + (static_cast<std::size_t>(ky) * g.kw + kx) * in.c;
          if (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) {
            const T* src = in.data() + (static_cast<std::size_t>(iy) * in.w + ix) * in.c;
            std::copy(src, src + in.c, dst);
          } else {
            std::fill(dst, dst + in.c, T(0));
          }
        }
      }
    }
  }
}

// Scatter-add of col-shaped gradients back onto the input map.
template <typename T>
void col2im_add(const MatRM<T>& dcol, const ConvGeom& g, FeatMap<T>& grad_in) {
  const int oh = conv_out_dim(grad_in.h, g.kh, g.stride, g.pad);
  const int ow = conv_out_dim(grad_in.w, g.kw, g.stride, g.pad);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = dcol.data() + (static_cast<std::size_t>(oy) * ow + ox) * dcol.cols();
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= grad_in.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= grad_in.w) continue;
          const T* src = row + (static_cast<std::size_t>(ky) * g.kw + kx) * grad_in.c;
          T* dst = grad_in.data() + (static_cast<std::size_t>(iy) * grad_in.w + ix) * grad_in.c;
          for (int c = 0; c < grad_in.c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

// weight layout: [oc][kh][kw][ic] flattened; bias [oc].
template <typename T>
void conv_forward(const FeatMap<T>& in, const Param<T>& weight, const Param<T>& bias, const ConvGeom& g,
                  FeatMap<T>& out, MatRM<T>& col_scratch) {
  const int oh = conv_out_dim(in.h, g.kh, g.stride, g.pad);
  const int ow = conv_out_dim(in.w, g.kw, g.stride, g.pad);
  const int kkc = g.kh * g.kw * in.c;
  const int oc = static_cast<int>(bias.count());
  im2col(in, g, col_scratch);
  out.resize(oh, ow, oc);
  MapMC<T> wmap(weight.w.data(), oc, kkc);
  MapM<T> omap(out.data(), static_cast<Eigen::Index>(oh) * ow, oc);
  omap.noalias() = col_scratch * wmap.transpose();
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bmap(bias.w.data(), oc);
  omap.rowwise() += bmap.transpose();
}

// Recomputes im2col(in) internally; accumulates dW/db, optionally emits grad_in.
template <typename T>
void conv_backward(const FeatMap<T>& in, const FeatMap<T>& grad_out, const Param<T>& weight, const ConvGeom& g,
                   std::vector<T>& d_weight, std::vector<T>& d_bias, FeatMap<T>* grad_in, MatRM<T>& col_scratch,
                   MatRM<T>& dcol_scratch) {
  const int oh = grad_out.h, ow = grad_out.w, oc = grad_out.c;
  const int kkc = g.kh * g.kw * in.c;
  im2col(in, g, col_scratch);
  MapMC<T> gmap(grad_out.data(), static_cast<Eigen::Index>(oh) * ow, oc);
  MapMC<T> wmap(weight.w.data(), oc, kkc);
  MapM<T> dwmap(d_weight.data(), oc, kkc);
  dwmap.noalias() += gmap.transpose() * col_scratch;
  // scalar bias reduction: a vectorized map reduction would make the
  // summation split depend on the heap address of grad_out
  for (std::size_t p = 0; p < static_cast<std::size_t>(oh) * ow; ++p) {
    const T* row = grad_out.data() + p * oc;
    for (int c = 0; c < oc; ++c) d_bias[c] += row[c];
  }
  if (grad_in != nullptr) {
    grad_in->resize(in.h, in.w, in.c);
    dcol_scratch.resize(static_cast<Eigen::Index>(oh) * ow, kkc);
    dcol_scratch.noalias() = gmap * wmap;
    col2im_add(dcol_scratch, g, *grad_in);
  }
}

// GroupNorm over a single sample: statistics per group of channels across
// all spatial positions. Cache keeps what the backward pass needs.
template <typename T>
struct GroupNormCache {
  FeatMap<T> xhat;
  std::vector<T> inv_std;  // per group
};

template <typename T>
void groupnorm_forward(const FeatMap<T>& in, const Param<T>& gamma, const Param<T>& beta, int groups,
                       FeatMap<T>& out, GroupNormCache<T>& cache, T eps = T(1e-5)) {
  const int c = in.c;
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("groupnorm: groups " + std::to_string(groups) + " must divide channels " + std::to_string(c));
  }
  const int cg = c / groups;
  const int hw = in.pixels();
  const std::size_t n = static_cast<std::size_t>(hw) * cg;
  out.resize(in.h, in.w, c);
  cache.xhat.resize(in.h, in.w, c);
  cache.inv_std.assign(groups, T(0));
  for (int g = 0; g < groups; ++g) {
    const int c0 = g * cg;
    T sum = T(0);
    for (int p = 0; p < hw; ++p) {
      const T* x = in.data() + static_cast<std::size_t>(p) * c + c0;
      for (int j = 0; j < cg; ++j) sum += x[j];
    }
    const T mean = sum / static_cast<T>(n);
    T ss = T(0);
    for (int p = 0; p < hw; ++p) {
      const T* x = in.data() + static_cast<std::size_t>(p) * c + c0;
      for (int j = 0; j < cg; ++j) {
        const T d = x[j] - mean;
        ss += d * d;
      }
    }
    const T inv_std = T(1) / std::sqrt(ss / static_cast<T>(n) + eps);
    cache.inv_std[g] = inv_std;
    for (int p = 0; p < hw; ++p) {
      const T* x = in.data() + static_cast<std::size_t>(p) * c + c0;
      T* xh = cache.xhat.data() + static_cast<std::size_t>(p) * c + c0;
      T* y = out.data() + static_cast<std::size_t>(p) * c + c0;
      for (int j = 0; j < cg; ++j) {
        xh[j] = (x[j] - mean) * inv_std;
        y[j] = gamma.w[c0 + j] * xh[j] + beta.w[c0 + j];
      }
    }
  }
}

template <typename T>
void groupnorm_backward(const FeatMap<T>& grad_out, const Param<T>& gamma, int groups, const GroupNormCache<T>& cache,
                        FeatMap<T>& grad_in, std::vector<T>& d_gamma, std::vector<T>& d_beta) {
  const int c = grad_out.c;
  const int cg = c / groups;
  const int hw = grad_out.pixels();
  const T n = static_cast<T>(static_cast<std::size_t>(hw) * cg);
  grad_in.resize(grad_out.h, grad_out.w, c);
  for (int ch = 0; ch < c; ++ch) {
    T dg = T(0), db = T(0);
    for (int p = 0; p < hw; ++p) {
      const std::size_t i = static_cast<std::size_t>(p) * c + ch;
      dg += grad_out.v[i] * cache.xhat.v[i];
      db += grad_out.v[i];
    }
    d_gamma[ch] += dg;
    d_beta[ch] += db;
  }
  for (int g = 0; g < groups; ++g) {
    const int c0 = g * cg;
    T m1 = T(0), m2 = T(0);
    for (int p = 0; p < hw; ++p) {
      const std::size_t base = static_cast<std::size_t>(p) * c + c0;
      for (int j = 0; j < cg; ++j) {
        const T dxh = grad_out.v[base + j] * gamma.w[c0 + j];
        m1 += dxh;
        m2 += dxh * cache.xhat.v[base + j];
      }
    }
    m1 /= n;
    m2 /= n;
    const T inv_std = cache.inv_std[g];
    for (int p = 0; p < hw; ++p) {
      const std::size_t base = static_cast<std::size_t>(p) * c + c0;
      for (int j = 0; j < cg; ++j) {
        const T dxh = grad_out.v[base + j] * gamma.w[c0 + j];
        grad_in.v[base + j] = inv_std * (dxh - m1 - cache.xhat.v[base + j] * m2);
      }
    }
  }
}

template <typename T>
void leaky_relu_forward(const FeatMap<T>& in, T slope, FeatMap<T>& out) {
  out.resize(in.h, in.w, in.c);
  for (std::size_t i = 0; i < in.v.size(); ++i) {
    const T x = in.v[i];
    out.v[i] = x > T(0) ? x : slope * x;
  }
}

// Uses the sign of the forward output (leaky-relu is sign-preserving).
template <typename T>
void leaky_relu_backward(const FeatMap<T>& grad_out, const FeatMap<T>& fwd_out, T slope, FeatMap<T>& grad_in) {
  grad_in.resize(grad_out.h, grad_out.w, grad_out.c);
  for (std::size_t i = 0; i < grad_out.v.size(); ++i) {
    grad_in.v[i] = grad_out.v[i] * (fwd_out.v[i] > T(0) ? T(1) : slope);
  }
}

template <typename T>
struct MaxPoolCache {
  std::vector<std::int32_t> argmax;  // flat input pixel index per (out pixel, channel)
};

template <typename T>
void maxpool_forward(const FeatMap<T>& in, const ConvGeom& g, FeatMap<T>& out, MaxPoolCache<T>& cache) {
  const int oh = conv_out_dim(in.h, g.kh, g.stride, g.pad);
  const int ow = conv_out_dim(in.w, g.kw, g.stride, g.pad);
  out.resize(oh, ow, in.c);
  cache.argmax.assign(static_cast<std::size_t>(oh) * ow * in.c, -1);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* orow = out.data() + (static_cast<std::size_t>(oy) * ow + ox) * in.c;
      std::int32_t* arow = cache.argmax.data() + (static_cast<std::size_t>(oy) * ow + ox) * in.c;
      bool first = true;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= in.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= in.w) continue;
          const std::int32_t pix = iy * in.w + ix;
          const T* irow = in.data() + static_cast<std::size_t>(pix) * in.c;
          if (first) {
            for (int c = 0; c < in.c; ++c) {
              orow[c] = irow[c];
              arow[c] = pix;
            }
            first = false;
          } else {
            for (int c = 0; c < in.c; ++c) {
              if (irow[c] > orow[c]) {
                orow[c] = irow[c];
                arow[c] = pix;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_backward(const FeatMap<T>& grad_out, const ConvGeom& g, const MaxPoolCache<T>& cache, int in_h, int in_w,
                      FeatMap<T>& grad_in) {
  grad_in.resize(in_h, in_w, grad_out.c);
  const int c = grad_out.c;
  for (std::size_t p = 0; p < static_cast<std::size_t>(grad_out.pixels()); ++p) {
    for (int ch = 0; ch < c; ++ch) {
      const std::int32_t pix = cache.argmax[p * c + ch];
      grad_in.v[static_cast<std::size_t>(pix) * c + ch] += grad_out.v[p * c + ch];
    }
  }
}

// Fully connected on flat vectors; weight [out, in] row-major. The head
// is tiny, so plain loops keep it fast and address-independent.
template <typename T>
void linear_forward(const std::vector<T>& in, const Param<T>& weight, const Param<T>& bias, std::vector<T>& out) {
  const int no = static_cast<int>(bias.count());
  const int ni = static_cast<int>(in.size());
  out.assign(no, T(0));
  for (int i = 0; i < no; ++i) {
    const T* row = weight.w.data() + static_cast<std::size_t>(i) * ni;
    T acc = bias.w[i];
    for (int j = 0; j < ni; ++j) acc += row[j] * in[j];
    out[i] = acc;
  }
}

template <typename T>
void linear_backward(const std::vector<T>& in, const std::vector<T>& grad_out, const Param<T>& weight,
                     std::vector<T>& d_weight, std::vector<T>& d_bias, std::vector<T>& grad_in) {
  const int no = static_cast<int>(grad_out.size());
  const int ni = static_cast<int>(in.size());
  for (int i = 0; i < no; ++i) {
    T* drow = d_weight.data() + static_cast<std::size_t>(i) * ni;
    for (int j = 0; j < ni; ++j) drow[j] += grad_out[i] * in[j];
    d_bias[i] += grad_out[i];
  }
  grad_in.assign(ni, T(0));
  for (int i = 0; i < no; ++i) {
    const T* row = weight.w.data() + static_cast<std::size_t>(i) * ni;
    for (int j = 0; j < ni; ++j) grad_in[j] += row[j] * grad_out[i];
  }
}

// Cross-entropy of one 12-way (or K-way) sample from raw logits.
// Returns the loss; fills dlogits with softmax(logits) - onehot(label).
template <typename T>
T softmax_ce(const std::vector<T>& logits, int label, std::vector<T>* dlogits = nullptr) {
  const int k = static_cast<int>(logits.size());
  if (label < 0 || label >= k) {
    throw InvalidArgument("class label " + std::to_string(label) + " outside [0," + std::to_string(k - 1) + "]");
  }
  T m = logits[0];
  for (int i = 1; i < k; ++i) m = std::max(m, logits[i]);
  T z = T(0);
  for (int i = 0; i < k; ++i) z += std::exp(logits[i] - m);
  const T lse = m + std::log(z);
  if (dlogits != nullptr) {
    dlogits->assign(k, T(0));
    for (int i = 0; i < k; ++i) (*dlogits)[i] = std::exp(logits[i] - m) / z;
    (*dlogits)[label] -= T(1);
  }
  return lse - logits[label];
}

}  // namespace sclvi::nn
