#pragma once

#include <vector>

#include "sclvi/core/image.hpp"
#include "sclvi/core/rng.hpp"
#include "sclvi/pretext/grid.hpp"

namespace sclvi::pretext {

struct PretextConfig {
  int patch_size = 32;
  int jitter_max = 16;      // px, per axis, either direction
  int gray_shift_max = 16;  // additive shift bound in 1/255 units
  int grid_gap = 0;         // px between nominal cells
};

struct PatchPairSample {
  ImageF patch_a, patch_b;
  RelativeClass label;
  struct Meta {
    int image_id = 0;
    int grid_top = 0, grid_left = 0;  // origin of the nominal 3x3 grid
    GridPose pose_a, pose_b;
  } meta;
};

// Places a 3x3 grid of nominal cells at a random admissible origin, picks
// two distinct cells, jitters each crop independently by up to jitter_max
// px per axis, and applies an independent per-patch gray shift (identical
// across channels, clamped to [0,1]). Presentation order of the two
// patches is randomized; the label is order-invariant.
PatchPairSample sample_patch_pair(const ImageF& image, const PretextConfig& cfg, Rng& rng, int image_id = 0);

}  // namespace sclvi::pretext
