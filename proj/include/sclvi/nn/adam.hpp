#pragma once

#include <cmath>
#include <vector>

#include "sclvi/nn/ops.hpp"

namespace sclvi::nn {

// Adaptive-moment gradient descent with bias correction. One instance per
// model; parameter order must stay fixed between steps.
template <typename T>
class Adam {
 public:
  Adam(const std::vector<Param<T>*>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->count(), T(0));
      v_[i].assign(params[i]->count(), T(0));
    }
  }

  void step(const std::vector<Param<T>*>& params, const GradStore<T>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i]->w;
      const auto& g = grads.g[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = b1_ * m_[i][j] + (1.0 - b1_) * gj;
        const double vj = b2_ * v_[i][j] + (1.0 - b2_) * gj * gj;
        m_[i][j] = mj;
        v_[i][j] = vj;
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        w[j] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace sclvi::nn
