#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sclvi/core/rng.hpp"
#include "sclvi/harness/metrics.hpp"

using namespace sclvi;
using sclvi::harness::auroc;

namespace {

// Pairwise-comparison oracle, ties at half credit.
double oracle_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) {
        num += 1.0;
      } else if (s[i] == s[j]) {
        num += 0.5;
      }
    }
  }
  return num / pairs;
}

}  // namespace

TEST_CASE("auroc: closed-form cases") {
  CHECK(auroc({1, 2, 3, 10, 11, 12}, {0, 0, 0, 1, 1, 1}) == 1.0);
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(auroc({5, 5, 5, 5}, {0, 1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-12));  // all tied
  CHECK_THROWS_AS(auroc({1, 2}, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(auroc({1, 2}, {0, 2}), InvalidArgument);
  CHECK_THROWS_AS(auroc({1}, {0, 1}), InvalidArgument);
}

TEST_CASE("auroc: labels independent of scores gives about one half") {
  Rng rng(5);
  const int n = 20000;
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.5 ? 1 : 0;
  }
  CHECK(std::abs(auroc(s, y) - 0.5) < 0.02);
}

TEST_CASE("auroc matches the brute-force pairwise oracle on 200 random instances with ties") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const int n = rng.uniform_int(4, 60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    bool has1 = false, has0 = false;
    for (int i = 0; i < n; ++i) {
      // coarse score grid so ties actually occur
      s[i] = rng.uniform_int(0, 9) / 3.0;
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
      has1 = has1 || y[i] == 1;
      has0 = has0 || y[i] == 0;
    }
    if (!has1) y[0] = 1;
    if (!has0) y[n - 1] = 0;
    CHECK(std::abs(auroc(s, y) - oracle_auroc(s, y)) <= 1e-12);
  }
}
