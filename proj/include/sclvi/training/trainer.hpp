#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "sclvi/core/image.hpp"
#include "sclvi/encoder/model.hpp"
#include "sclvi/pretext/sample.hpp"

namespace sclvi::training {

struct TrainConfig {
  double alpha = 1e-4;        // SVDD weight in the fused loss
  int svdd_offset_max = 4;    // px, positive-pair offset
  int batch_size = 64;        // pairs per scale per step (pretext and SVDD each)
  int epochs = 20;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  int steps_per_epoch = 32;
  double holdout_fraction = 0.1;  // images reserved for pretext accuracy
  int eval_pairs = 64;            // held-out pairs per scale per epoch

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 0 = pre-training evaluation, no update applied
  double ssl_mean = 0.0;
  double svdd_mean = 0.0;
  double total_mean = 0.0;
  double acc_small = 0.0;
  double acc_large = 0.0;

  double acc() const { return 0.5 * (acc_small + acc_large); }
};

struct TrainReport {
  std::vector<EpochStats> epochs;

  const EpochStats& final() const { return epochs.back(); }
};

// Joint optimization of both scales: each step draws pretext pairs and
// SVDD positive pairs per scale, forms ssl + alpha * svdd and applies one
// Adam update. Reproducible under cfg.seed for a fixed thread count.
TrainReport train(encoder::ModelF& model, const std::vector<ImageF>& images, const TrainConfig& cfg,
                  const pretext::PretextConfig& pcfg_small, const pretext::PretextConfig& pcfg_large,
                  std::ostream* log = nullptr);

}  // namespace sclvi::training
