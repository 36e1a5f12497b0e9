#include "sclvi/encoder/windows.hpp"

#include <omp.h>

#include <unordered_map>

namespace sclvi::encoder {

namespace {

WindowGrid make_grid(const ImageF& image, int patch, int stride) {
  if (stride < 1) throw InvalidArgument("window stride must be >= 1");
  if (image.h < patch || image.w < patch) {
    throw GeometryError("image " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                        " smaller than patch size " + std::to_string(patch));
  }
  WindowGrid g;
  g.rows = (image.h - patch) / stride + 1;
  g.cols = (image.w - patch) / stride + 1;
  g.patch = patch;
  g.stride = stride;
  g.image_h = image.h;
  g.image_w = image.w;
  return g;
}

}  // namespace

WindowGrid encode_windows(const ModelF& model, const ImageF& image, Scale scale, int stride) {
  const int patch = patch_size(scale);
  WindowGrid g = make_grid(image, patch, stride);
  g.embed_dim = model.dims().embed;
  const int n = g.rows * g.cols;
  g.features.assign(static_cast<std::size_t>(n) * g.embed_dim, 0.f);

  if (scale == Scale::small32) {
    std::vector<ImageF> patches;
    patches.reserve(n);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) patches.push_back(crop(image, {r * stride, c * stride, patch, patch}));
    encode_batch(model, scale, patches, g.features);
    return g;
  }

  // Large scale: collect the unique 32x32 quadrant origins first.
  std::unordered_map<std::int64_t, int> origin_index;
  std::vector<ImageF> subs;
  auto sub_id = [&](int y, int x) {
    const std::int64_t key = static_cast<std::int64_t>(y) * (image.w + 1) + x;
    auto it = origin_index.find(key);
    if (it != origin_index.end()) return it->second;
    const int idx = static_cast<int>(subs.size());
    origin_index.emplace(key, idx);
    subs.push_back(crop(image, {y, x, 32, 32}));
    return idx;
  };
  std::vector<std::array<int, 4>> window_subs(static_cast<std::size_t>(n));
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const int y = r * stride, x = c * stride;
      window_subs[static_cast<std::size_t>(r) * g.cols + c] = {sub_id(y, x), sub_id(y, x + 32), sub_id(y + 32, x),
                                                               sub_id(y + 32, x + 32)};
    }
  }
  std::vector<float> sub_emb;
  encode_batch(model, Scale::small32, subs, sub_emb);

  const int e = g.embed_dim;
#pragma omp parallel
  {
    SecondaryWs<float> ws;
    Scratch<float> s;
    ws.quad.resize(2, 2, e);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      for (int q = 0; q < 4; ++q) {
        const float* src = sub_emb.data() + static_cast<std::size_t>(window_subs[i][q]) * e;
        std::copy(src, src + e, ws.quad.data() + static_cast<std::size_t>(q) * e);
      }
      const FeatMap<float>& emb = model.forward_secondary(ws, s);
      std::copy(emb.data(), emb.data() + e, g.features.begin() + static_cast<std::size_t>(i) * e);
    }
  }
  return g;
}

}  // namespace sclvi::encoder
