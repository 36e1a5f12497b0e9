#pragma once

#include <vector>

#include "sclvi/core/image.hpp"
#include "sclvi/encoder/model.hpp"

namespace sclvi::encoder {

// Embeddings of every sliding-window patch of one image, row-major over
// window positions.
struct WindowGrid {
  int rows = 0, cols = 0;
  int patch = 0, stride = 0;
  int image_h = 0, image_w = 0;
  int embed_dim = 0;
  std::vector<float> features;  // rows*cols x embed_dim

  const float* at(int r, int c) const { return features.data() + (static_cast<std::size_t>(r) * cols + c) * embed_dim; }
};

// Encodes all windows of `image` at the given scale and stride. For the
// 64-pixel scale the four 32x32 quadrants of neighbouring windows often
// coincide on a shared lattice; shared sub-patches are encoded once.
WindowGrid encode_windows(const ModelF& model, const ImageF& image, Scale scale, int stride);

}  // namespace sclvi::encoder
