#pragma once

#include <cmath>
#include <vector>

#include "sclvi/core/error.hpp"
#include "sclvi/nn/ops.hpp"

namespace sclvi::pretext {

// Mean 12-way cross-entropy over a batch of pair logits. When dlogits is
// given it receives d(loss)/d(logits), already scaled by 1/batch.
template <typename T>
T ssl_loss(const std::vector<std::vector<T>>& logits, const std::vector<int>& labels,
           std::vector<std::vector<T>>* dlogits = nullptr) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw InvalidArgument("ssl_loss: batch of " + std::to_string(logits.size()) + " logit rows vs " +
                          std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.size();
  for (const auto& row : logits) {
    for (const T& x : row) {
      if (!std::isfinite(static_cast<double>(x))) throw NumericError("ssl_loss: non-finite logit");
    }
  }
  if (dlogits) dlogits->resize(b);
  T total = T(0);
  std::vector<T> d;
  for (std::size_t i = 0; i < b; ++i) {
    total += nn::softmax_ce(logits[i], labels[i], dlogits ? &d : nullptr);
    if (dlogits) {
      for (auto& x : d) x /= static_cast<T>(b);
      (*dlogits)[i] = d;
    }
  }
  return total / static_cast<T>(b);
}

}  // namespace sclvi::pretext
