#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sclvi/core/image.hpp"

namespace sclvi::harness {

struct Sample {
  ImageF image;
  int label = 0;  // 0 normal, 1 defective
  bool has_mask = false;
  MaskU8 mask;
  std::string category;
  std::string split;        // "train" | "test"
  std::string name;         // file stem or synthetic id
  std::string defect_type;  // "good" or the defect directory / family
};

struct SampleSet {
  std::vector<Sample> train, test;
};

struct SynthSpec {
  int n_train = 32;
  int n_test = 40;                       // half normal, half defective
  std::string texture = "checkerboard";  // checkerboard | stripes | blobs
  int defect_min = 16;
  int defect_max = 48;
  int image_size = 256;

  void validate() const;
};

// Deterministic synthetic textures: a per-family luminance pattern plus
// fixed positional color ramps (R tracks x, B tracks y), so patch content
// carries the position cues the pretext task needs. Defects use colors
// and frequencies outside the normal manifold.
SampleSet generate_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed);

// The clean render a defective test image was derived from (same seed and
// index); defective pixels differ from it exactly inside the mask.
ImageF synthetic_clean_test_image(const SynthSpec& spec, std::uint64_t seed, int test_index);

// MVTec AD directory layout: <root>/<category>/{train/good, test/<type>,
// ground_truth/<type>}. Images resized bilinearly to resize_to, masks
// with nearest neighbor. Files are processed in sorted order.
SampleSet load_mvtec_category(const std::string& root, const std::string& category, int resize_to = 256);

// Lists subdirectories of root that follow the layout above.
std::vector<std::string> list_mvtec_categories(const std::string& root);

// Writes a SampleSet as an MVTec-layout directory tree (used by `synth`).
void write_mvtec_layout(const SampleSet& set, const std::string& out_dir, const std::string& defect_dir = "defect");

}  // namespace sclvi::harness
