#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "sclvi/core/image.hpp"
#include "sclvi/encoder/model.hpp"

namespace sclvi::memory {

struct AffinityConfig {
  int eta = 10;             // neighbors retrieved
  double lambda_cap = 20.0;  // cap on the affinity exponent; recommended [15, 30]

  void validate() const {
    if (eta < 1) throw ConfigError("affinity.eta must be >= 1");
    if (!(lambda_cap > 1.0)) throw ConfigError("affinity.lambda_cap must be > 1");
  }
};

struct BankRowMeta {
  int image_id = 0;
  int top = 0, left = 0;
};

// Normal-feature store for one scale: all patch embeddings of the
// defect-free images, queried by exact Euclidean nearest neighbors.
// Immutable after build; concurrent queries are safe.
struct MemoryBank {
  encoder::Scale scale = encoder::Scale::small32;
  int stride = 0;
  int dim = 0;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> features;  // M x dim
  std::vector<BankRowMeta> provenance;
  std::vector<std::string> image_names;

  long rows() const { return features.rows(); }
};

// Slides a patch window over every image, encodes each patch and stores
// all embeddings with provenance, in (image, row, col) order. A stride
// larger than the patch size leaves gaps; that is warned about but
// permitted. max_rows > 0 caps the bank by seeded uniform subsampling.
MemoryBank build_memory(const encoder::ModelF& model, const std::vector<ImageF>& images, encoder::Scale scale,
                        int stride, const std::vector<std::string>& image_names = {}, int max_rows = 0,
                        std::uint64_t subsample_seed = 0);

void save_bank(const MemoryBank& bank, const std::string& path);
MemoryBank load_bank(const std::string& path);

struct NearestResult {
  std::vector<int> indices;       // ascending by distance, ties to lower index
  std::vector<double> distances;  // sorted ascending
};

NearestResult nearest(const MemoryBank& bank, const double* query, int eta);
NearestResult nearest(const MemoryBank& bank, const encoder::Embedding& query, int eta);

// Eq. 4: gamma_i = min(sum(d)/d_i, lambda), beta = softmax(gamma),
// computed with max subtraction. A zero distance saturates at lambda.
std::vector<double> affinity_weights(const std::vector<double>& distances, double lambda_cap);

// Eq. 5: convex combination of retrieved features.
std::vector<double> fuse(const std::vector<std::vector<double>>& features, const std::vector<double>& weights);

// Eq. 6: distance from the query to the affinity-fused normal pattern.
double patch_score(const MemoryBank& bank, const double* query, const AffinityConfig& cfg);
double patch_score(const MemoryBank& bank, const encoder::Embedding& query, const AffinityConfig& cfg);

}  // namespace sclvi::memory
