#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sclvi/anomaly/map.hpp"
#include "sclvi/encoder/checkpoint.hpp"
#include "sclvi/harness/config_file.hpp"
#include "sclvi/harness/dataset.hpp"
#include "sclvi/memory/bank.hpp"
#include "sclvi/training/trainer.hpp"

namespace sclvi::harness {

struct EvalConfig {
  memory::AffinityConfig affinity;
  anomaly::FuseMode fuse_mode = anomaly::FuseMode::multiply;
  std::string seg_pooling = "pooled";  // pooled | per_image
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct CategoryResult {
  std::string name;
  double detection_auroc = 0.0;
  double segmentation_auroc = 0.0;
};

struct EvalReport {
  double detection_auroc = 0.0;
  double segmentation_auroc = 0.0;
  std::vector<CategoryResult> per_category;
  // run metadata
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  int eta = 0;
  double lambda_cap = 0.0;
  std::string fuse_mode;
  std::string seg_pooling;
  int stride32 = 0, stride64 = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  void save(const std::string& path) const;
  static EvalReport load(const std::string& path);
};

// Cached per-image encodings so eta sweeps re-score without re-encoding.
struct EvalCache {
  std::vector<encoder::WindowGrid> grids32, grids64;
  std::vector<int> labels;
  std::vector<const MaskU8*> masks;  // null for normal images
};

// Fused-map evaluation over one test set: detection AUROC of max-pixel
// scores, segmentation AUROC over pooled pixels (or per-image mean).
EvalReport evaluate(const encoder::ModelF& model, const memory::MemoryBank& bank32,
                    const memory::MemoryBank& bank64, const std::vector<Sample>& test, const EvalConfig& cfg,
                    EvalCache* cache = nullptr);

struct EtaSweepRow {
  int eta = 0;
  double detection_auroc = 0.0;
  double segmentation_auroc = 0.0;
};

// Re-scores cached embeddings for each eta; banks and encodings are
// reused, so no retraining or re-encoding happens.
std::vector<EtaSweepRow> sweep_eta(const EvalCache& cache, const memory::MemoryBank& bank32,
                                   const memory::MemoryBank& bank64, const std::vector<int>& etas,
                                   const EvalConfig& cfg);

// Parses "a:b:step" ranges or comma lists ("1,5,10,20,50").
std::vector<int> parse_eta_sweep(const std::string& text);

// Per-category text table in the layout of the paper's result tables
// (categories, then Textures / Objects / Mean aggregate rows).
void print_category_table(std::ostream& os, const std::vector<CategoryResult>& rows);

struct MvtecRunConfig {
  encoder::EncoderConfig enc;
  pretext::PretextConfig pre_small{32, 16, 16, 0}, pre_large{64, 16, 16, 0};
  training::TrainConfig train;
  EvalConfig eval;
  int stride32 = 4, stride64 = 16;
  int bank_max_rows = 0;
  std::string workdir;  // checkpoints and banks cached here
};

// Full per-category protocol: train on train/good, build both banks,
// evaluate on the test split; aggregates follow the standard category
// grouping. Cached artifacts in workdir are reused when present.
EvalReport run_mvtec_protocol(const std::string& root, std::vector<std::string> categories,
                              const MvtecRunConfig& cfg, std::ostream& log);

// All module configs bundled, parsed from one config file.
struct RunConfig {
  encoder::EncoderConfig enc;
  pretext::PretextConfig pre_small{32, 16, 16, 0}, pre_large{64, 16, 16, 0};
  training::TrainConfig train;
  EvalConfig eval;
  SynthSpec synth;
  std::uint64_t synth_seed = 1;
  int stride32 = 4, stride64 = 16;
  int bank_max_rows = 0;
};

RunConfig run_config_from(const ConfigFile& file);

}  // namespace sclvi::harness
