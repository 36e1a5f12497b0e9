#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "sclvi/core/error.hpp"
#include "sclvi/core/image.hpp"
#include "sclvi/core/rng.hpp"
#include "sclvi/encoder/model.hpp"

namespace sclvi::training {

// Crop at rect plus a near-identical copy offset by up to offset_max px
// per axis (offset clamped so the second crop stays inside the image).
std::pair<ImageF, ImageF> make_positive_pair(const ImageF& image, const Rect& rect, int offset_max, Rng& rng);

// Sum over the batch of Euclidean distances ||a_i - b_i||_2. When grads
// is given it receives d(loss)/d(a_i) per pair (the b gradient is its
// negation). The zero-distance subgradient is 0.
template <typename T>
T svdd_loss_raw(const std::vector<std::vector<T>>& a, const std::vector<std::vector<T>>& b,
                std::vector<std::vector<T>>* grads = nullptr) {
  if (a.size() != b.size()) throw InvalidArgument("svdd_loss: mismatched batch sizes");
  if (grads) grads->assign(a.size(), {});
  T total = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw ShapeError("svdd_loss: embedding length mismatch");
    T ss = T(0);
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const T d = a[i][j] - b[i][j];
      ss += d * d;
    }
    const T norm = std::sqrt(ss);
    if (!std::isfinite(static_cast<double>(norm))) throw NumericError("svdd_loss: non-finite distance");
    total += norm;
    if (grads) {
      auto& g = (*grads)[i];
      g.assign(a[i].size(), T(0));
      if (norm > T(0)) {
        for (std::size_t j = 0; j < a[i].size(); ++j) g[j] = (a[i][j] - b[i][j]) / norm;
      }
    }
  }
  return total;
}

// Spec-level wrapper over Embedding pairs; all pairs must share one scale.
float svdd_loss(const std::vector<std::pair<encoder::Embedding, encoder::Embedding>>& pairs);

// Eq. 3 fusion: ssl + alpha * svdd.
double total_loss(double ssl, double svdd, double alpha);

}  // namespace sclvi::training
