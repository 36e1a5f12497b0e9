#include "sclvi/memory/bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>

#include "sclvi/core/rng.hpp"
#include "sclvi/encoder/windows.hpp"

namespace sclvi::memory {

using encoder::Scale;

namespace {

constexpr char kMagic[8] = {'S', 'C', 'L', 'V', 'I', 'B', 'N', 'K'};
constexpr std::uint32_t kBankVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("memory bank: truncated file");
  return v;
}

}  // namespace

MemoryBank build_memory(const encoder::ModelF& model, const std::vector<ImageF>& images, Scale scale, int stride,
                        const std::vector<std::string>& image_names, int max_rows, std::uint64_t subsample_seed) {
  if (images.empty()) throw InvalidArgument("build_memory: empty image set");
  if (stride < 1) throw InvalidArgument("build_memory: stride must be >= 1");
  const int patch = encoder::patch_size(scale);
  if (stride > patch) {
    std::cerr << "warning: bank stride " << stride << " exceeds patch size " << patch
              << "; the scan leaves uncovered gaps\n";
  }

  MemoryBank bank;
  bank.scale = scale;
  bank.stride = stride;
  bank.dim = model.dims().embed;
  bank.image_names = image_names;

  std::vector<float> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto grid = encoder::encode_windows(model, images[i], scale, stride);
    rows.insert(rows.end(), grid.features.begin(), grid.features.end());
    for (int r = 0; r < grid.rows; ++r)
      for (int c = 0; c < grid.cols; ++c)
        bank.provenance.push_back({static_cast<int>(i), r * stride, c * stride});
  }
  long m = static_cast<long>(bank.provenance.size());

  if (max_rows > 0 && m > max_rows) {
    // Seeded uniform subsample (partial Fisher-Yates), kept in index order.
    Rng rng(subsample_seed);
    std::vector<long> idx(m);
    std::iota(idx.begin(), idx.end(), 0L);
    for (long i = 0; i < max_rows; ++i) {
      const long j = i + rng.uniform_int(0, static_cast<int>(m - 1 - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(max_rows);
    std::sort(idx.begin(), idx.end());
    std::vector<float> kept;
    kept.reserve(static_cast<std::size_t>(max_rows) * bank.dim);
    std::vector<BankRowMeta> kept_meta;
    kept_meta.reserve(max_rows);
    for (long i : idx) {
      kept.insert(kept.end(), rows.begin() + i * bank.dim, rows.begin() + (i + 1) * bank.dim);
      kept_meta.push_back(bank.provenance[static_cast<std::size_t>(i)]);
    }
    rows = std::move(kept);
    bank.provenance = std::move(kept_meta);
    m = max_rows;
  }

  bank.features.resize(m, bank.dim);
  for (long i = 0; i < m; ++i)
    for (int j = 0; j < bank.dim; ++j) bank.features(i, j) = rows[static_cast<std::size_t>(i) * bank.dim + j];
  return bank;
}

void save_bank(const MemoryBank& bank, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("memory bank: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kBankVersion);
  write_pod<std::int32_t>(os, encoder::patch_size(bank.scale));
  write_pod<std::int32_t>(os, bank.stride);
  write_pod<std::int64_t>(os, bank.rows());
  write_pod<std::int32_t>(os, bank.dim);
  write_pod<std::int32_t>(os, static_cast<std::int32_t>(bank.image_names.size()));
  for (const auto& n : bank.image_names) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(n.size()));
    os.write(n.data(), static_cast<std::streamsize>(n.size()));
  }
  for (long i = 0; i < bank.rows(); ++i) {
    for (int j = 0; j < bank.dim; ++j) {
      const float v = static_cast<float>(bank.features(i, j));
      write_pod(os, v);
    }
  }
  for (const auto& p : bank.provenance) {
    write_pod<std::int32_t>(os, p.image_id);
    write_pod<std::int32_t>(os, p.top);
    write_pod<std::int32_t>(os, p.left);
  }
  if (!os) throw IoError("memory bank: write failed: " + path);
}

MemoryBank load_bank(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("memory bank: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw IoError("memory bank: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kBankVersion) throw IoError("memory bank: unsupported version " + std::to_string(version));
  MemoryBank bank;
  const auto patch = read_pod<std::int32_t>(is);
  if (patch == 32) {
    bank.scale = Scale::small32;
  } else if (patch == 64) {
    bank.scale = Scale::large64;
  } else {
    throw IoError("memory bank: unknown patch size " + std::to_string(patch));
  }
  bank.stride = read_pod<std::int32_t>(is);
  const auto m = read_pod<std::int64_t>(is);
  bank.dim = read_pod<std::int32_t>(is);
  const auto name_count = read_pod<std::int32_t>(is);
  bank.image_names.resize(name_count);
  for (auto& n : bank.image_names) {
    const auto len = read_pod<std::uint32_t>(is);
    n.assign(len, '\0');
    is.read(n.data(), len);
  }
  bank.features.resize(m, bank.dim);
  for (long i = 0; i < m; ++i) {
    for (int j = 0; j < bank.dim; ++j) bank.features(i, j) = read_pod<float>(is);
  }
  bank.provenance.resize(static_cast<std::size_t>(m));
  for (auto& p : bank.provenance) {
    p.image_id = read_pod<std::int32_t>(is);
    p.top = read_pod<std::int32_t>(is);
    p.left = read_pod<std::int32_t>(is);
  }
  return bank;
}

NearestResult nearest(const MemoryBank& bank, const double* query, int eta) {
  const long m = bank.rows();
  if (eta < 1) throw InvalidArgument("nearest: eta must be >= 1");
  if (eta > m) {
    throw InvalidArgument("nearest: eta " + std::to_string(eta) + " exceeds bank size " + std::to_string(m));
  }
  // scalar distance loop: vectorized reductions would tie the summation
  // order to runtime buffer alignment and break cross-run determinism
  std::vector<std::pair<double, int>> d2(static_cast<std::size_t>(m));
  for (long i = 0; i < m; ++i) {
    const double* row = bank.features.data() + static_cast<std::size_t>(i) * bank.dim;
    double ss = 0.0;
    for (int j = 0; j < bank.dim; ++j) {
      const double d = row[j] - query[j];
      ss += d * d;
    }
    d2[static_cast<std::size_t>(i)] = {ss, static_cast<int>(i)};
  }
  std::partial_sort(d2.begin(), d2.begin() + eta, d2.end());
  NearestResult out;
  out.indices.reserve(eta);
  out.distances.reserve(eta);
  for (int k = 0; k < eta; ++k) {
    out.indices.push_back(d2[k].second);
    out.distances.push_back(std::sqrt(std::max(0.0, d2[k].first)));
  }
  return out;
}

NearestResult nearest(const MemoryBank& bank, const encoder::Embedding& query, int eta) {
  if (query.scale != bank.scale) {
    throw InvalidArgument(std::string("nearest: query scale ") + encoder::scale_name(query.scale) +
                          " does not match bank scale " + encoder::scale_name(bank.scale));
  }
  std::vector<double> q(query.vector.begin(), query.vector.end());
  return nearest(bank, q.data(), eta);
}

std::vector<double> affinity_weights(const std::vector<double>& distances, double lambda_cap) {
  if (distances.empty()) throw InvalidArgument("affinity_weights: empty distance list");
  if (!(lambda_cap > 1.0)) throw ConfigError("affinity_weights: lambda_cap must be > 1");
  double total = 0.0;
  for (double d : distances) {
    if (d < 0.0) throw InvalidArgument("affinity_weights: negative distance " + std::to_string(d));
    total += d;
  }
  const std::size_t n = distances.size();
  std::vector<double> gamma(n);
  for (std::size_t i = 0; i < n; ++i) {
    gamma[i] = distances[i] > 0.0 ? std::min(total / distances[i], lambda_cap) : lambda_cap;
  }
  const double gmax = *std::max_element(gamma.begin(), gamma.end());
  std::vector<double> beta(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    beta[i] = std::exp(gamma[i] - gmax);
    z += beta[i];
  }
  for (auto& b : beta) b /= z;
  return beta;
}

std::vector<double> fuse(const std::vector<std::vector<double>>& features, const std::vector<double>& weights) {
  if (features.empty() || features.size() != weights.size()) {
    throw InvalidArgument("fuse: " + std::to_string(features.size()) + " features vs " +
                          std::to_string(weights.size()) + " weights");
  }
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9) throw InvalidArgument("fuse: weights sum to " + std::to_string(wsum) + ", not 1");
  const std::size_t dim = features.front().size();
  std::vector<double> out(dim, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim) throw ShapeError("fuse: feature length mismatch");
    for (std::size_t j = 0; j < dim; ++j) out[j] += weights[i] * features[i][j];
  }
  return out;
}

double patch_score(const MemoryBank& bank, const double* query, const AffinityConfig& cfg) {
  cfg.validate();
  const NearestResult nn = nearest(bank, query, cfg.eta);
  const std::vector<double> beta = affinity_weights(nn.distances, cfg.lambda_cap);
  std::vector<double> fused(bank.dim, 0.0);
  for (std::size_t k = 0; k < beta.size(); ++k) {
    for (int j = 0; j < bank.dim; ++j) fused[j] += beta[k] * bank.features(nn.indices[k], j);
  }
  double ss = 0.0;
  for (int j = 0; j < bank.dim; ++j) {
    const double d = query[j] - fused[j];
    ss += d * d;
  }
  return std::sqrt(ss);
}

double patch_score(const MemoryBank& bank, const encoder::Embedding& query, const AffinityConfig& cfg) {
  if (query.scale != bank.scale) {
    throw InvalidArgument(std::string("patch_score: query scale ") + encoder::scale_name(query.scale) +
                          " does not match bank scale " + encoder::scale_name(bank.scale));
  }
  std::vector<double> q(query.vector.begin(), query.vector.end());
  return patch_score(bank, q.data(), cfg);
}

}  // namespace sclvi::memory
