#pragma once

#include <string>
#include <vector>

#include "sclvi/core/image.hpp"
#include "sclvi/encoder/windows.hpp"
#include "sclvi/memory/bank.hpp"

namespace sclvi::anomaly {

struct PatchScoreGrid {
  int rows = 0, cols = 0;
  int patch = 0, stride = 0;
  int image_h = 0, image_w = 0;
  std::vector<double> scores;  // rows x cols

  double at(int r, int c) const { return scores[static_cast<std::size_t>(r) * cols + c]; }
};

struct AnomalyMap {
  int h = 0, w = 0;
  std::vector<double> pixels;
  struct Provenance {
    std::vector<std::string> sources;   // contributing "patchNN/strideMM" tags
    bool uncovered_pixels = false;      // stride > patch left zero-coverage pixels
  } provenance;

  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * w + x]; }
};

enum class FuseMode { multiply, mean };

FuseMode fuse_mode_from_string(const std::string& s);
const char* to_string(FuseMode m);

// Slides the scale's window over the image, encodes every patch and
// scores it against the bank (Eqs. 4-6).
PatchScoreGrid score_patches(const encoder::ModelF& model, const ImageF& image, const memory::MemoryBank& bank,
                             encoder::Scale scale, int stride, const memory::AffinityConfig& cfg);

// Same, from an already-encoded window grid (used by the eta sweep).
PatchScoreGrid score_grid(const encoder::WindowGrid& grid, const memory::MemoryBank& bank,
                          const memory::AffinityConfig& cfg);

// Eq. 7: every pixel averages the scores of the patches containing it,
// with the true per-pixel patch count (smaller near borders). Pixels no
// patch covers score 0 and set the provenance flag.
AnomalyMap aggregate_pixels(const PatchScoreGrid& grid);

// Min-shifts each map by the given offset (defaults to its own minimum)
// and combines elementwise. Multiply is the default; mean is kept for
// ablation.
AnomalyMap fuse_scales(const AnomalyMap& map64, const AnomalyMap& map32, FuseMode mode = FuseMode::multiply);
AnomalyMap fuse_scales(const AnomalyMap& map64, const AnomalyMap& map32, FuseMode mode, double shift64,
                       double shift32);

// Batch variant: shifts are the per-scale minima over the whole batch.
std::vector<AnomalyMap> fuse_scales_batch(const std::vector<AnomalyMap>& maps64,
                                          const std::vector<AnomalyMap>& maps32, FuseMode mode);

// Image-level defect score: maximum pixel.
double image_score(const AnomalyMap& map);

// 8-bit grayscale export, min-max normalized per image; the applied
// normalization goes to <path>.json. raw_path, when set, receives the
// float32 matrix as .npy.
void save_anomaly_png(const AnomalyMap& map, const std::string& path, const std::string& raw_path = "");

}  // namespace sclvi::anomaly
