#include "sclvi/anomaly/map.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

namespace sclvi::anomaly {

using encoder::Scale;

FuseMode fuse_mode_from_string(const std::string& s) {
  if (s == "multiply") return FuseMode::multiply;
  if (s == "mean") return FuseMode::mean;
  throw ConfigError("unknown fuse mode '" + s + "' (multiply|mean)");
}

const char* to_string(FuseMode m) { return m == FuseMode::multiply ? "multiply" : "mean"; }

PatchScoreGrid score_grid(const encoder::WindowGrid& grid, const memory::MemoryBank& bank,
                          const memory::AffinityConfig& cfg) {
  if (grid.patch != encoder::patch_size(bank.scale)) {
    throw InvalidArgument("score_grid: window patch " + std::to_string(grid.patch) + " vs bank scale " +
                          encoder::scale_name(bank.scale));
  }
  cfg.validate();
  PatchScoreGrid out;
  out.rows = grid.rows;
  out.cols = grid.cols;
  out.patch = grid.patch;
  out.stride = grid.stride;
  out.image_h = grid.image_h;
  out.image_w = grid.image_w;
  const int n = grid.rows * grid.cols;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel
  {
    std::vector<double> q(grid.embed_dim);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      const float* f = grid.features.data() + static_cast<std::size_t>(i) * grid.embed_dim;
      for (int j = 0; j < grid.embed_dim; ++j) q[j] = f[j];
      out.scores[static_cast<std::size_t>(i)] = memory::patch_score(bank, q.data(), cfg);
    }
  }
  return out;
}

PatchScoreGrid score_patches(const encoder::ModelF& model, const ImageF& image, const memory::MemoryBank& bank,
                             Scale scale, int stride, const memory::AffinityConfig& cfg) {
  if (scale != bank.scale) {
    throw InvalidArgument(std::string("score_patches: requested scale ") + encoder::scale_name(scale) +
                          " does not match bank scale " + encoder::scale_name(bank.scale));
  }
  if (model.dims().embed != bank.dim) {
    throw ShapeError("score_patches: encoder embed dim " + std::to_string(model.dims().embed) + " vs bank dim " +
                     std::to_string(bank.dim));
  }
  const auto grid = encoder::encode_windows(model, image, scale, stride);
  return score_grid(grid, bank, cfg);
}

AnomalyMap aggregate_pixels(const PatchScoreGrid& grid) {
  if (grid.rows < 1 || grid.cols < 1 || grid.patch < 1 || grid.stride < 1) {
    throw InvalidArgument("aggregate_pixels: invalid grid geometry");
  }
  AnomalyMap map;
  map.h = grid.image_h;
  map.w = grid.image_w;
  map.pixels.assign(static_cast<std::size_t>(map.h) * map.w, 0.0);
  map.provenance.sources.push_back("patch" + std::to_string(grid.patch) + "/stride" + std::to_string(grid.stride));
  std::vector<std::int32_t> count(map.pixels.size(), 0);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const double s = grid.at(r, c);
      const int y0 = r * grid.stride, x0 = c * grid.stride;
      for (int y = y0; y < y0 + grid.patch; ++y) {
        double* prow = map.pixels.data() + static_cast<std::size_t>(y) * map.w;
        std::int32_t* crow = count.data() + static_cast<std::size_t>(y) * map.w;
        for (int x = x0; x < x0 + grid.patch; ++x) {
          prow[x] += s;
          ++crow[x];
        }
      }
    }
  }
  for (std::size_t i = 0; i < map.pixels.size(); ++i) {
    if (count[i] > 0) {
      map.pixels[i] /= count[i];
    } else {
      map.provenance.uncovered_pixels = true;
    }
  }
  return map;
}

AnomalyMap fuse_scales(const AnomalyMap& map64, const AnomalyMap& map32, FuseMode mode, double shift64,
                       double shift32) {
  if (map64.h != map32.h || map64.w != map32.w) {
    throw ShapeError("fuse_scales: size mismatch " + std::to_string(map64.h) + "x" + std::to_string(map64.w) +
                     " vs " + std::to_string(map32.h) + "x" + std::to_string(map32.w));
  }
  AnomalyMap out;
  out.h = map64.h;
  out.w = map64.w;
  out.pixels.resize(map64.pixels.size());
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double a = map64.pixels[i] - shift64;
    const double b = map32.pixels[i] - shift32;
    out.pixels[i] = mode == FuseMode::multiply ? a * b : 0.5 * (a + b);
  }
  out.provenance.sources = map64.provenance.sources;
  out.provenance.sources.insert(out.provenance.sources.end(), map32.provenance.sources.begin(),
                                map32.provenance.sources.end());
  out.provenance.uncovered_pixels = map64.provenance.uncovered_pixels || map32.provenance.uncovered_pixels;
  return out;
}

AnomalyMap fuse_scales(const AnomalyMap& map64, const AnomalyMap& map32, FuseMode mode) {
  const double s64 = *std::min_element(map64.pixels.begin(), map64.pixels.end());
  const double s32 = *std::min_element(map32.pixels.begin(), map32.pixels.end());
  return fuse_scales(map64, map32, mode, s64, s32);
}

std::vector<AnomalyMap> fuse_scales_batch(const std::vector<AnomalyMap>& maps64,
                                          const std::vector<AnomalyMap>& maps32, FuseMode mode) {
  if (maps64.size() != maps32.size()) throw InvalidArgument("fuse_scales_batch: batch size mismatch");
  if (maps64.empty()) return {};
  double s64 = std::numeric_limits<double>::infinity();
  double s32 = std::numeric_limits<double>::infinity();
  for (const auto& m : maps64) s64 = std::min(s64, *std::min_element(m.pixels.begin(), m.pixels.end()));
  for (const auto& m : maps32) s32 = std::min(s32, *std::min_element(m.pixels.begin(), m.pixels.end()));
  std::vector<AnomalyMap> out;
  out.reserve(maps64.size());
  for (std::size_t i = 0; i < maps64.size(); ++i) out.push_back(fuse_scales(maps64[i], maps32[i], mode, s64, s32));
  return out;
}

double image_score(const AnomalyMap& map) {
  if (map.pixels.empty()) throw InvalidArgument("image_score: empty map");
  return *std::max_element(map.pixels.begin(), map.pixels.end());
}

void save_anomaly_png(const AnomalyMap& map, const std::string& path, const std::string& raw_path) {
  const double lo = *std::min_element(map.pixels.begin(), map.pixels.end());
  const double hi = *std::max_element(map.pixels.begin(), map.pixels.end());
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::uint8_t> gray(map.pixels.size());
  for (std::size_t i = 0; i < map.pixels.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * (map.pixels[i] - lo) / span));
  }
  save_gray_png(gray, map.h, map.w, path);
  nlohmann::json side{{"min", lo},
                      {"max", hi},
                      {"height", map.h},
                      {"width", map.w},
                      {"sources", map.provenance.sources},
                      {"uncovered_pixels", map.provenance.uncovered_pixels}};
  std::ofstream os(path + ".json");
  if (!os) throw IoError("cannot write sidecar: " + path + ".json");
  os << side.dump(2) << "\n";
  if (!raw_path.empty()) {
    std::vector<float> raw(map.pixels.begin(), map.pixels.end());
    save_npy_f32(raw, map.h, map.w, raw_path);
  }
}

}  // namespace sclvi::anomaly
