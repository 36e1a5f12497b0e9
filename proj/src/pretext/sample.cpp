#include "sclvi/pretext/sample.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace sclvi::pretext {

namespace {

void apply_gray_shift(ImageF& patch, float shift) {
  for (auto& v : patch.rgb) v = std::clamp(v + shift, 0.f, 1.f);
}

}  // namespace

PatchPairSample sample_patch_pair(const ImageF& image, const PretextConfig& cfg, Rng& rng, int image_id) {
  const int p = cfg.patch_size;
  const int j = cfg.jitter_max;
  const int span = 3 * p + 2 * cfg.grid_gap;
  const int need = span + 2 * j;
  if (image.h < need || image.w < need) {
    throw GeometryError("image " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                        " too small for 3x3 grid of " + std::to_string(p) + "px patches with " + std::to_string(j) +
                        "px jitter margin; minimum is " + std::to_string(need) + "x" + std::to_string(need));
  }

  // Fixed draw order keeps samples reproducible under a seed:
  // origin, cells, jitters (a then b), gray shifts (a then b), swap.
  const int oy = rng.uniform_int(j, image.h - span - j);
  const int ox = rng.uniform_int(j, image.w - span - j);
  const int cell_a = rng.uniform_int(0, 8);
  int cell_b = rng.uniform_int(0, 7);
  if (cell_b >= cell_a) ++cell_b;

  const int pitch = p + cfg.grid_gap;
  auto make_pose = [&](int cell) {
    GridPose pose = GridPose::from_index(cell);
    const int dy = rng.uniform_int(-j, j);
    const int dx = rng.uniform_int(-j, j);
    pose.rect = Rect{oy + pose.row * pitch + dy, ox + pose.col * pitch + dx, p, p};
    return pose;
  };
  GridPose pose_a = make_pose(cell_a);
  GridPose pose_b = make_pose(cell_b);

  PatchPairSample s;
  s.patch_a = crop(image, pose_a.rect);
  s.patch_b = crop(image, pose_b.rect);
  const float gmax = static_cast<float>(cfg.gray_shift_max) / 255.f;
  apply_gray_shift(s.patch_a, static_cast<float>(rng.uniform(-gmax, gmax)));
  apply_gray_shift(s.patch_b, static_cast<float>(rng.uniform(-gmax, gmax)));
  s.label = relative_class_of(pose_a, pose_b);
  s.meta.image_id = image_id;
  s.meta.grid_top = oy;
  s.meta.grid_left = ox;
  s.meta.pose_a = pose_a;
  s.meta.pose_b = pose_b;
  if (rng.uniform() < 0.5) {
    std::swap(s.patch_a, s.patch_b);
    std::swap(s.meta.pose_a, s.meta.pose_b);
  }
  return s;
}

}  // namespace sclvi::pretext
