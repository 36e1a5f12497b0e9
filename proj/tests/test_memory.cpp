#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sclvi/memory/bank.hpp"
#include "support/test_models.hpp"

using namespace sclvi;
using namespace sclvi::memory;
using encoder::Scale;

namespace {

MemoryBank random_bank(int m, int dim, std::uint64_t seed, Scale scale = Scale::small32) {
  Rng rng(seed);
  MemoryBank bank;
  bank.scale = scale;
  bank.stride = 4;
  bank.dim = dim;
  bank.features.resize(m, dim);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < dim; ++j) bank.features(i, j) = rng.uniform(-1.0, 1.0);
    bank.provenance.push_back({0, i, 0});
  }
  return bank;
}

// Straight-line re-implementation of Eqs. 4-6 used as the oracle.
double oracle_score(const MemoryBank& bank, const std::vector<double>& q, int eta, double lambda) {
  std::vector<std::pair<double, int>> all;
  for (long i = 0; i < bank.rows(); ++i) {
    double ss = 0;
    for (int j = 0; j < bank.dim; ++j) {
      const double d = bank.features(i, j) - q[j];
      ss += d * d;
    }
    all.push_back({std::sqrt(ss), static_cast<int>(i)});
  }
  std::sort(all.begin(), all.end());
  all.resize(eta);
  double total = 0;
  for (const auto& [d, i] : all) total += d;
  std::vector<double> gamma(eta);
  for (int k = 0; k < eta; ++k) gamma[k] = all[k].first > 0 ? std::min(total / all[k].first, lambda) : lambda;
  double z = 0;
  std::vector<double> beta(eta);
  const double gmax = *std::max_element(gamma.begin(), gamma.end());
  for (int k = 0; k < eta; ++k) {
    beta[k] = std::exp(gamma[k] - gmax);
    z += beta[k];
  }
  std::vector<double> fused(bank.dim, 0.0);
  for (int k = 0; k < eta; ++k) {
    for (int j = 0; j < bank.dim; ++j) fused[j] += beta[k] / z * bank.features(all[k].second, j);
  }
  double ss = 0;
  for (int j = 0; j < bank.dim; ++j) ss += (q[j] - fused[j]) * (q[j] - fused[j]);
  return std::sqrt(ss);
}

}  // namespace

TEST_CASE("nearest: exact row hit, whole-bank boundary, brute-force match") {
  const MemoryBank bank = random_bank(100, 16, 42);
  std::vector<double> q(16);
  for (int j = 0; j < 16; ++j) q[j] = bank.features(37, j);

  const auto r1 = nearest(bank, q.data(), 1);
  CHECK(r1.indices[0] == 37);
  CHECK(r1.distances[0] == 0.0);

  const auto all = nearest(bank, q.data(), 100);
  CHECK(all.indices.size() == 100);
  CHECK(std::is_sorted(all.distances.begin(), all.distances.end()));

  // brute-force oracle comparison
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    for (auto& v : q) v = rng.uniform(-1.2, 1.2);
    std::vector<std::pair<double, int>> oracle;
    for (long i = 0; i < bank.rows(); ++i) {
      double ss = 0;
      for (int j = 0; j < 16; ++j) {
        const double d = bank.features(i, j) - q[j];
        ss += d * d;
      }
      oracle.push_back({ss, static_cast<int>(i)});
    }
    std::sort(oracle.begin(), oracle.end());
    const auto got = nearest(bank, q.data(), 10);
    for (int k = 0; k < 10; ++k) {
      CHECK(got.indices[k] == oracle[k].second);
      CHECK(got.distances[k] == doctest::Approx(std::sqrt(oracle[k].first)).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(nearest(bank, q.data(), 101), InvalidArgument);
}

TEST_CASE("nearest: ties broken by lower row index") {
  MemoryBank bank = random_bank(10, 4, 1);
  // rows 3 and 7 identical
  for (int j = 0; j < 4; ++j) bank.features(7, j) = bank.features(3, j);
  std::vector<double> q(4);
  for (int j = 0; j < 4; ++j) q[j] = bank.features(3, j) + 0.001;
  const auto r = nearest(bank, q.data(), 2);
  CHECK(r.indices[0] == 3);
  CHECK(r.indices[1] == 7);
  CHECK(r.distances[0] == r.distances[1]);
}

TEST_CASE("affinity_weights: closed forms from the scalar oracle") {
  CHECK(affinity_weights({0.7}, 20.0) == std::vector<double>{1.0});

  const auto equal = affinity_weights({2.0, 2.0, 2.0, 2.0}, 20.0);
  for (double b : equal) CHECK(b == doctest::Approx(0.25).epsilon(1e-12));

  // d = [1,1,2], lambda = 20: gamma = [4,4,2]
  const auto beta = affinity_weights({1.0, 1.0, 2.0}, 20.0);
  const double e4 = std::exp(4.0), e2 = std::exp(2.0);
  CHECK(beta[0] == doctest::Approx(e4 / (2 * e4 + e2)).epsilon(1e-9));
  CHECK(beta[1] == doctest::Approx(e4 / (2 * e4 + e2)).epsilon(1e-9));
  CHECK(beta[2] == doctest::Approx(e2 / (2 * e4 + e2)).epsilon(1e-9));
  // the published three-case numbers, at their stated tolerance
  CHECK(std::abs(beta[0] - 0.46831) < 1e-5);
  CHECK(std::abs(beta[1] - 0.46831) < 1e-5);
  CHECK(std::abs(beta[2] - 0.06337) < 1e-5);

  // cap engages for tiny distances; no overflow for exact zeros
  const auto capped = affinity_weights({0.001, 1.0, 1.0}, 20.0);
  for (double b : capped) CHECK(std::isfinite(b));
  CHECK(capped[0] > capped[1]);
  const auto zero = affinity_weights({0.0, 1.0, 1.0}, 20.0);
  for (double b : zero) CHECK(std::isfinite(b));
  const auto all_zero = affinity_weights({0.0, 0.0}, 20.0);
  CHECK(all_zero[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(affinity_weights({-0.1, 1.0}, 20.0), InvalidArgument);
  CHECK_THROWS_AS(affinity_weights({}, 20.0), InvalidArgument);
}

TEST_CASE("affinity_weights: invariants on random inputs") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const int n = rng.uniform_int(1, 12);
    std::vector<double> d(n);
    for (auto& v : d) v = rng.uniform(0.0, 3.0);
    if (t % 5 == 0) d[rng.uniform_int(0, n - 1)] = 0.0;  // exercise the zero path
    const double lambda = rng.uniform(15.0, 30.0);
    const auto beta = affinity_weights(d, lambda);
    double sum = 0;
    for (double b : beta) {
      CHECK(b > 0.0);
      CHECK(b <= 1.0);
      sum += b;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    // weak monotonicity: smaller distance -> weight at least as large
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (d[i] <= d[j]) CHECK(beta[i] >= beta[j] - 1e-12);
      }
    }
    // scale invariance where no cap engages
    double total = 0;
    for (double v : d) total += v;
    bool uncapped = true;
    for (double v : d) uncapped = uncapped && v > 0.0 && total / v < lambda;
    if (uncapped) {
      std::vector<double> scaled(d);
      for (auto& v : scaled) v *= 3.7;
      const auto beta2 = affinity_weights(scaled, lambda);
      for (int i = 0; i < n; ++i) CHECK(beta[i] == doctest::Approx(beta2[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fuse: boundary cases, convex hull property, errors") {
  std::vector<std::vector<double>> one{{1.0, -2.0, 3.0}};
  CHECK(fuse(one, {1.0}) == one[0]);

  std::vector<std::vector<double>> same{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  const auto fused = fuse(same, {0.2, 0.3, 0.5});
  CHECK(fused[0] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const int n = rng.uniform_int(2, 8), dim = rng.uniform_int(1, 6);
    std::vector<std::vector<double>> feats(n, std::vector<double>(dim));
    for (auto& f : feats)
      for (auto& v : f) v = rng.uniform(-2, 2);
    std::vector<double> w(n);
    double sum = 0;
    for (auto& v : w) {
      v = rng.uniform(0.01, 1.0);
      sum += v;
    }
    for (auto& v : w) v /= sum;
    const auto out = fuse(feats, w);
    for (int j = 0; j < dim; ++j) {
      double lo = feats[0][j], hi = feats[0][j];
      for (const auto& f : feats) {
        lo = std::min(lo, f[j]);
        hi = std::max(hi, f[j]);
      }
      CHECK(out[j] >= lo - 1e-12);
      CHECK(out[j] <= hi + 1e-12);
    }
  }

  CHECK_THROWS_AS(fuse({{1.0}, {2.0}}, {0.7, 0.7}), InvalidArgument);
  CHECK_THROWS_AS(fuse({{1.0}, {2.0, 3.0}}, {0.5, 0.5}), ShapeError);
}

TEST_CASE("patch_score: eta=1 degenerates to exact 1-NN distance; oracle match") {
  const MemoryBank bank = random_bank(50, 12, 77);
  Rng rng(13);
  std::vector<double> q(12);

  AffinityConfig one;
  one.eta = 1;
  for (int t = 0; t < 30; ++t) {
    for (auto& v : q) v = rng.uniform(-1.5, 1.5);
    double best = 1e300;
    for (long i = 0; i < bank.rows(); ++i) {
      double ss = 0;
      for (int j = 0; j < 12; ++j) {
        const double d = bank.features(i, j) - q[j];
        ss += d * d;
      }
      best = std::min(best, std::sqrt(ss));
    }
    CHECK(patch_score(bank, q.data(), one) == doctest::Approx(best).epsilon(1e-9));
  }

  // query equal to a bank row
  for (int j = 0; j < 12; ++j) q[j] = bank.features(20, j);
  CHECK(patch_score(bank, q.data(), one) == 0.0);

  AffinityConfig ten;
  ten.eta = 10;
  for (int t = 0; t < 30; ++t) {
    for (auto& v : q) v = rng.uniform(-1.5, 1.5);
    const double got = patch_score(bank, q.data(), ten);
    const double want = oracle_score(bank, q, 10, 20.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("patch_score embedding wrapper validates scale") {
  const MemoryBank bank = random_bank(5, 64, 5, Scale::large64);
  encoder::Embedding e;
  e.scale = Scale::small32;
  AffinityConfig cfg;
  cfg.eta = 2;
  CHECK_THROWS_AS(patch_score(bank, e, cfg), InvalidArgument);
  CHECK_THROWS_AS(nearest(bank, e, 2), InvalidArgument);
}

TEST_CASE("build_memory: sliding-window row count, duplicates kept, save/load byte-exact") {
  // shrunken encoder keeps this fast; row counts are width-independent
  encoder::Model<float> model(test::shrunken_config(3), test::shrunken_dims());
  Rng rng(21);
  ImageF img(256, 256);
  for (auto& v : img.rgb) v = static_cast<float>(rng.uniform());

  const auto bank = build_memory(model, {img}, Scale::small32, 4);
  CHECK(bank.rows() == 3249);  // ((256-32)/4+1)^2
  CHECK(bank.dim == model.dims().embed);
  CHECK(bank.provenance.size() == 3249);
  CHECK(bank.provenance[1].left == 4);

  const auto dup = build_memory(model, {img, img}, Scale::small32, 32);
  const long per_image = dup.rows() / 2;
  for (int j = 0; j < dup.dim; ++j) CHECK(dup.features(0, j) == dup.features(per_image, j));

  const auto tmp = std::filesystem::temp_directory_path() / "sclvi_bank_test.bank";
  save_bank(dup, tmp.string());
  const auto loaded = load_bank(tmp.string());
  CHECK(loaded.rows() == dup.rows());
  CHECK(loaded.stride == dup.stride);
  CHECK(loaded.scale == dup.scale);
  for (long i = 0; i < dup.rows(); ++i) {
    for (int j = 0; j < dup.dim; ++j) CHECK(loaded.features(i, j) == dup.features(i, j));
    CHECK(loaded.provenance[i].top == dup.provenance[i].top);
  }
  // second round trip is byte-identical
  const auto tmp2 = std::filesystem::temp_directory_path() / "sclvi_bank_test2.bank";
  save_bank(loaded, tmp2.string());
  std::ifstream f1(tmp, std::ios::binary), f2(tmp2, std::ios::binary);
  std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);
  std::filesystem::remove(tmp);
  std::filesystem::remove(tmp2);

  CHECK_THROWS_AS(build_memory(model, {}, Scale::small32, 4), InvalidArgument);
}

TEST_CASE("build_memory: max_rows caps the bank with a seeded subsample") {
  encoder::Model<float> model(test::shrunken_config(3), test::shrunken_dims());
  Rng rng(22);
  ImageF img(256, 256);
  for (auto& v : img.rgb) v = static_cast<float>(rng.uniform());
  const auto full = build_memory(model, {img}, Scale::small32, 16);
  const auto capped = build_memory(model, {img}, Scale::small32, 16, {}, 50, 9);
  CHECK(full.rows() == 225);
  CHECK(capped.rows() == 50);
  // capped rows are a subset of the full bank (same scan, same encoder)
  for (long i = 0; i < capped.rows(); ++i) {
    bool found = false;
    for (long k = 0; k < full.rows(); ++k) {
      if (full.provenance[k].top == capped.provenance[i].top &&
          full.provenance[k].left == capped.provenance[i].left) {
        found = true;
        bool equal = true;
        for (int j = 0; j < full.dim; ++j) equal = equal && full.features(k, j) == capped.features(i, j);
        CHECK(equal);
        break;
      }
    }
    CHECK(found);
  }
}
