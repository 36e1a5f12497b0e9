#include "sclvi/training/svdd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sclvi::training {

std::pair<ImageF, ImageF> make_positive_pair(const ImageF& image, const Rect& rect, int offset_max, Rng& rng) {
  if (!rect.inside(image.h, image.w)) {
    throw GeometryError("positive-pair rect (" + std::to_string(rect.top) + "," + std::to_string(rect.left) + "," +
                        std::to_string(rect.height) + "," + std::to_string(rect.width) + ") outside image " +
                        std::to_string(image.h) + "x" + std::to_string(image.w));
  }
  if (offset_max < 0) throw InvalidArgument("svdd_offset_max must be >= 0");
  const int dy = rng.uniform_int(-offset_max, offset_max);
  const int dx = rng.uniform_int(-offset_max, offset_max);
  Rect shifted = rect;
  shifted.top = std::clamp(rect.top + dy, 0, image.h - rect.height);
  shifted.left = std::clamp(rect.left + dx, 0, image.w - rect.width);
  return {crop(image, rect), crop(image, shifted)};
}

float svdd_loss(const std::vector<std::pair<encoder::Embedding, encoder::Embedding>>& pairs) {
  std::vector<std::vector<float>> a, b;
  a.reserve(pairs.size());
  b.reserve(pairs.size());
  for (const auto& [e1, e2] : pairs) {
    if (e1.scale != e2.scale || (!pairs.empty() && e1.scale != pairs.front().first.scale)) {
      throw InvalidArgument("svdd_loss: embeddings of mixed scales");
    }
    a.emplace_back(e1.vector.begin(), e1.vector.end());
    b.emplace_back(e2.vector.begin(), e2.vector.end());
  }
  return svdd_loss_raw(a, b);
}

double total_loss(double ssl, double svdd, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be > 0");
  if (!std::isfinite(ssl) || !std::isfinite(svdd)) throw NumericError("total_loss: non-finite component");
  return ssl + alpha * svdd;
}

}  // namespace sclvi::training
