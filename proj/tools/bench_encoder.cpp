// Micro-benchmark for the encoder forward/backward cost; used to size
// training configs for a given machine.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "sclvi/core/rng.hpp"
#include "sclvi/encoder/model.hpp"
#include "sclvi/nn/ops.hpp"

using namespace sclvi;
using namespace sclvi::encoder;

int main() {
  ModelF model;
  Rng rng(7);
  std::size_t total = 0;
  for (const auto* p : model.params()) total += p->count();
  std::printf("params=%zu threads=%d\n", total, omp_get_max_threads());

  const int n = 64;
  std::vector<ImageF> patches;
  for (int i = 0; i < n; ++i) {
    ImageF p(32, 32);
    for (auto& v : p.rgb) v = static_cast<float>(rng.uniform());
    patches.push_back(p);
  }
  std::vector<float> out;
  encode_batch(model, Scale::small32, patches, out);  // warmup
  auto t0 = std::chrono::steady_clock::now();
  encode_batch(model, Scale::small32, patches, out);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  std::printf("fwd_small_ms_per_patch=%.3f (batch %d)\n", ms / n, n);

  nn::GradStore<float> grads;
  grads.init(model.params());
  SmallWs<float> ws;
  Scratch<float> s;
  FeatMap<float> d(1, 1, model.dims().embed);
  for (auto& v : d.v) v = 0.01f;
  const int m = 16;
  t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < m; ++i) {
    auto f = to_featmap<float>(patches[i % n]);
    model.forward_small(f, ws, s);
    model.backward_small(d, ws, s, grads);
  }
  t1 = std::chrono::steady_clock::now();
  ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  std::printf("fwdbwd_small_ms_per_patch_single_thread=%.3f\n", ms / m);
  return 0;
}
