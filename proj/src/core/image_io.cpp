#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sclvi/core/image.hpp"

namespace sclvi {

namespace {

ImageF from_cv_bgr(const cv::Mat& bgr) {
  ImageF out(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out.at(y, x, 0) = row[x][2] / 255.f;
      out.at(y, x, 1) = row[x][1] / 255.f;
      out.at(y, x, 2) = row[x][0] / 255.f;
    }
  }
  return out;
}

cv::Mat to_cv_bgr(const ImageF& img) {
  cv::Mat bgr(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      auto q = [](float v) { return cv::saturate_cast<uchar>(v * 255.f); };
      row[x] = cv::Vec3b(q(img.at(y, x, 2)), q(img.at(y, x, 1)), q(img.at(y, x, 0)));
    }
  }
  return bgr;
}

}  // namespace

ImageF load_image_rgb(const std::string& path, int resize_to) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image: " + path);
  if (resize_to > 0 && (bgr.rows != resize_to || bgr.cols != resize_to)) {
    cv::resize(bgr, bgr, cv::Size(resize_to, resize_to), 0, 0, cv::INTER_LINEAR);
  }
  return from_cv_bgr(bgr);
}

MaskU8 load_mask(const std::string& path, int resize_to) {
  cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw IoError("cannot read mask: " + path);
  if (resize_to > 0 && (gray.rows != resize_to || gray.cols != resize_to)) {
    cv::resize(gray, gray, cv::Size(resize_to, resize_to), 0, 0, cv::INTER_NEAREST);
  }
  MaskU8 out(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    const uchar* row = gray.ptr<uchar>(y);
    for (int x = 0; x < gray.cols; ++x) out.at(y, x) = row[x] > 127 ? 1 : 0;
  }
  return out;
}

void save_image_rgb(const ImageF& img, const std::string& path) {
  if (!cv::imwrite(path, to_cv_bgr(img))) throw IoError("cannot write image: " + path);
}

void save_gray_png(const std::vector<std::uint8_t>& gray, int h, int w, const std::string& path) {
  if (static_cast<int>(gray.size()) != h * w) throw ShapeError("save_gray_png: buffer size mismatch");
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    std::copy(gray.begin() + static_cast<std::size_t>(y) * w, gray.begin() + static_cast<std::size_t>(y + 1) * w,
              m.ptr<uchar>(y));
  }
  if (!cv::imwrite(path, m)) throw IoError("cannot write png: " + path);
}

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
  cv::Mat src(img.h, img.w, CV_32FC3, const_cast<float*>(img.rgb.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  ImageF out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const cv::Vec3f* row = dst.ptr<cv::Vec3f>(y);
    for (int x = 0; x < out_w; ++x) {
      out.at(y, x, 0) = row[x][0];
      out.at(y, x, 1) = row[x][1];
      out.at(y, x, 2) = row[x][2];
    }
  }
  return out;
}

MaskU8 resize_nearest(const MaskU8& m, int out_h, int out_w) {
  cv::Mat src(m.h, m.w, CV_8UC1, const_cast<std::uint8_t*>(m.v.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_NEAREST);
  MaskU8 out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const uchar* row = dst.ptr<uchar>(y);
    for (int x = 0; x < out_w; ++x) out.at(y, x) = row[x];
  }
  return out;
}

void save_npy_f32(const std::vector<float>& data, int rows, int cols, const std::string& path) {
  if (static_cast<long long>(rows) * cols != static_cast<long long>(data.size())) {
    throw ShapeError("save_npy_f32: buffer size mismatch");
  }
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(rows) + ", " +
                     std::to_string(cols) + "), }";
  const std::size_t base = 10;  // magic + version + header length field
  std::size_t total = base + dict.size() + 1;
  const std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict.push_back('\n');
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write npy: " + path);
  os.write("\x93NUMPY\x01\x00", 8);
  const std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
  os.write(reinterpret_cast<const char*>(&hlen), 2);
  os.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!os) throw IoError("npy write failed: " + path);
}

}  // namespace sclvi
