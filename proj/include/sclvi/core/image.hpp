#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sclvi/core/error.hpp"
#include "sclvi/core/tensor.hpp"

namespace sclvi {

// RGB image with unit-interval float channels, HWC layout (same memory
// layout as FeatMap<float> with c == 3).
struct ImageF {
  int h = 0, w = 0;
  std::vector<float> rgb;  // h * w * 3

  ImageF() = default;
  ImageF(int h_, int w_, float fill = 0.f) : h(h_), w(w_), rgb(static_cast<std::size_t>(h_) * w_ * 3, fill) {}

  float& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  const float& at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
};

struct MaskU8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;  // 0 = normal, 1 = defect

  MaskU8() = default;
  MaskU8(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}

  std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Pixel rectangle: top-left corner plus extent.
struct Rect {
  int top = 0, left = 0, height = 0, width = 0;

  bool inside(int img_h, int img_w) const {
    return top >= 0 && left >= 0 && height > 0 && width > 0 && top + height <= img_h && left + width <= img_w;
  }
};

inline ImageF crop(const ImageF& img, const Rect& r) {
  if (!r.inside(img.h, img.w)) {
    throw GeometryError("crop rect (" + std::to_string(r.top) + "," + std::to_string(r.left) + "," +
                        std::to_string(r.height) + "," + std::to_string(r.width) + ") outside image " +
                        std::to_string(img.h) + "x" + std::to_string(img.w));
  }
  ImageF out(r.height, r.width);
  const std::size_t row_bytes = static_cast<std::size_t>(r.width) * 3;
  for (int y = 0; y < r.height; ++y) {
    const float* src = &img.rgb[((static_cast<std::size_t>(r.top) + y) * img.w + r.left) * 3];
    std::copy(src, src + row_bytes, &out.rgb[static_cast<std::size_t>(y) * row_bytes]);
  }
  return out;
}

template <typename T>
FeatMap<T> to_featmap(const ImageF& img) {
  FeatMap<T> out(img.h, img.w, 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) out.v[i] = static_cast<T>(img.rgb[i]);
  return out;
}

// Implemented in core/image_io.cpp (OpenCV-backed).
ImageF load_image_rgb(const std::string& path, int resize_to = 0);
MaskU8 load_mask(const std::string& path, int resize_to = 0);
void save_image_rgb(const ImageF& img, const std::string& path);
void save_gray_png(const std::vector<std::uint8_t>& gray, int h, int w, const std::string& path);
ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);
MaskU8 resize_nearest(const MaskU8& m, int out_h, int out_w);

// Minimal .npy (float32, 2-D) writer for raw anomaly-map export.
void save_npy_f32(const std::vector<float>& data, int rows, int cols, const std::string& path);

}  // namespace sclvi
