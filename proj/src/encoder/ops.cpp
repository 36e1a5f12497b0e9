#include <omp.h>

#include <algorithm>

#include "sclvi/encoder/model.hpp"

namespace sclvi::encoder {

Embedding encode_small(const ModelF& model, const ImageF& patch) {
  SmallWs<float> ws;
  Scratch<float> s;
  auto fm = to_featmap<float>(patch);
  const auto& e = model.forward_small(fm, ws, s);
  Embedding out;
  out.scale = Scale::small32;
  std::copy(e.data(), e.data() + kEmbedDim, out.vector.begin());
  return out;
}

Embedding encode_large(const ModelF& model, const ImageF& patch) {
  LargeWs<float> ws;
  Scratch<float> s;
  auto fm = to_featmap<float>(patch);
  const auto& e = model.forward_large(fm, ws, s);
  Embedding out;
  out.scale = Scale::large64;
  std::copy(e.data(), e.data() + kEmbedDim, out.vector.begin());
  return out;
}

std::vector<float> classify_pair(const ModelF& model, const Embedding& e1, const Embedding& e2) {
  if (e1.scale != e2.scale) {
    throw InvalidArgument(std::string("classify_pair: scale mismatch (") + scale_name(e1.scale) + " vs " +
                          scale_name(e2.scale) + ")");
  }
  HeadWs<float> ws;
  return model.head(e1.scale).forward(e1.vector.data(), e2.vector.data(), kEmbedDim, ws);
}

std::vector<ManifestEntry> parameter_manifest(const ModelF& model) {
  std::vector<ManifestEntry> out;
  out.reserve(model.params().size());
  for (const auto* p : model.params()) out.push_back({p->name, p->shape});
  return out;
}

std::vector<LayerShape> trace_small(const ModelF& model) {
  SmallWs<float> ws;
  Scratch<float> s;
  FeatMap<float> in(32, 32, 3);
  std::vector<LayerShape> trace;
  model.forward_small(in, ws, s, &trace);
  return trace;
}

std::vector<LayerShape> trace_large_secondary(const ModelF& model) {
  LargeWs<float> ws;
  Scratch<float> s;
  FeatMap<float> in(64, 64, 3);
  std::vector<LayerShape> trace;
  model.forward_large(in, ws, s, &trace);
  return trace;
}

void encode_batch(const ModelF& model, Scale scale, const std::vector<ImageF>& patches, std::vector<float>& out) {
  const int e = model.dims().embed;
  const int n = static_cast<int>(patches.size());
  out.assign(static_cast<std::size_t>(n) * e, 0.f);
#pragma omp parallel
  {
    SmallWs<float> sws;
    LargeWs<float> lws;
    Scratch<float> s;
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      auto fm = to_featmap<float>(patches[i]);
      const FeatMap<float>& emb =
          (scale == Scale::small32) ? model.forward_small(fm, sws, s) : model.forward_large(fm, lws, s);
      std::copy(emb.data(), emb.data() + e, out.begin() + static_cast<std::size_t>(i) * e);
    }
  }
}

}  // namespace sclvi::encoder
