#include "sclvi/training/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sclvi/nn/adam.hpp"
#include "sclvi/pretext/loss.hpp"
#include "sclvi/training/svdd.hpp"

namespace sclvi::training {

using encoder::LargeWs;
using encoder::ModelF;
using encoder::Scale;
using encoder::Scratch;
using encoder::SmallWs;

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("train.alpha must be > 0");
  if (svdd_offset_max < 0) throw ConfigError("train.svdd_offset_max must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (steps_per_epoch < 1) throw ConfigError("train.steps_per_epoch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("train.holdout_fraction in [0,1)");
}

namespace {

struct PairBatch {
  std::vector<ImageF> a, b;
  std::vector<int> labels;  // pretext only
};

// Per-thread working set; one entry per OpenMP thread, reused all run.
struct ThreadCtx {
  SmallWs<float> sa, sb;
  LargeWs<float> la, lb;
  Scratch<float> scratch;
  encoder::HeadWs<float> head;
  nn::GradStore<float> grads;
};

PairBatch sample_pretext_batch(const std::vector<ImageF>& images, const pretext::PretextConfig& pcfg, int count,
                               Rng& rng) {
  PairBatch out;
  out.a.reserve(count);
  out.b.reserve(count);
  out.labels.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int img = rng.uniform_int(0, static_cast<int>(images.size()) - 1);
    auto s = pretext::sample_patch_pair(images[img], pcfg, rng, img);
    out.a.push_back(std::move(s.patch_a));
    out.b.push_back(std::move(s.patch_b));
    out.labels.push_back(s.label.id);
  }
  return out;
}

PairBatch sample_svdd_batch(const std::vector<ImageF>& images, int patch, int offset_max, int count, Rng& rng) {
  PairBatch out;
  out.a.reserve(count);
  out.b.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int img = rng.uniform_int(0, static_cast<int>(images.size()) - 1);
    const Rect rect{rng.uniform_int(0, images[img].h - patch), rng.uniform_int(0, images[img].w - patch), patch,
                    patch};
    auto [p, q] = make_positive_pair(images[img], rect, offset_max, rng);
    out.a.push_back(std::move(p));
    out.b.push_back(std::move(q));
  }
  return out;
}

// Forward+backward of one pretext pair; returns its cross-entropy.
// Gradients are scaled by inv_batch so the batch loss is the mean.
template <Scale S>
double pretext_pair_step(const ModelF& model, const ImageF& pa, const ImageF& pb, int label, float inv_batch,
                         ThreadCtx& ctx, bool with_grad, int* correct) {
  const int e = model.dims().embed;
  const float* e1;
  const float* e2;
  auto fa = to_featmap<float>(pa);
  auto fb = to_featmap<float>(pb);
  if constexpr (S == Scale::small32) {
    e1 = model.forward_small(fa, ctx.sa, ctx.scratch).data();
    e2 = model.forward_small(fb, ctx.sb, ctx.scratch).data();
  } else {
    e1 = model.forward_large(fa, ctx.la, ctx.scratch).data();
    e2 = model.forward_large(fb, ctx.lb, ctx.scratch).data();
  }
  const auto& logits = model.head(S).forward(e1, e2, e, ctx.head);
  std::vector<float> dlogits;
  const double ce = nn::softmax_ce(logits, label, with_grad ? &dlogits : nullptr);
  if (correct) {
    const int pred =
        static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    *correct = (pred == label) ? 1 : 0;
  }
  if (with_grad) {
    for (auto& x : dlogits) x *= inv_batch;
    std::vector<float> de1, de2;
    model.head(S).backward(dlogits, ctx.head, ctx.grads, de1, de2);
    FeatMap<float> d1(1, 1, e), d2(1, 1, e);
    std::copy(de1.begin(), de1.end(), d1.data());
    std::copy(de2.begin(), de2.end(), d2.data());
    if constexpr (S == Scale::small32) {
      model.backward_small(d1, ctx.sa, ctx.scratch, ctx.grads);
      model.backward_small(d2, ctx.sb, ctx.scratch, ctx.grads);
    } else {
      model.backward_large(d1, ctx.la, ctx.scratch, ctx.grads);
      model.backward_large(d2, ctx.lb, ctx.scratch, ctx.grads);
    }
  }
  return ce;
}

// Forward+backward of one SVDD positive pair; returns ||e1 - e2||.
// Gradients carry the alpha weight of the fused loss.
template <Scale S>
double svdd_pair_step(const ModelF& model, const ImageF& pa, const ImageF& pb, float alpha, ThreadCtx& ctx,
                      bool with_grad) {
  const int e = model.dims().embed;
  const float* e1;
  const float* e2;
  auto fa = to_featmap<float>(pa);
  auto fb = to_featmap<float>(pb);
  if constexpr (S == Scale::small32) {
    e1 = model.forward_small(fa, ctx.sa, ctx.scratch).data();
    e2 = model.forward_small(fb, ctx.sb, ctx.scratch).data();
  } else {
    e1 = model.forward_large(fa, ctx.la, ctx.scratch).data();
    e2 = model.forward_large(fb, ctx.lb, ctx.scratch).data();
  }
  double ss = 0.0;
  for (int j = 0; j < e; ++j) {
    const double d = static_cast<double>(e1[j]) - static_cast<double>(e2[j]);
    ss += d * d;
  }
  const double norm = std::sqrt(ss);
  if (with_grad && norm > 0.0) {
    FeatMap<float> d1(1, 1, e), d2(1, 1, e);
    for (int j = 0; j < e; ++j) {
      const float g = alpha * static_cast<float>((static_cast<double>(e1[j]) - static_cast<double>(e2[j])) / norm);
      d1.data()[j] = g;
      d2.data()[j] = -g;
    }
    if constexpr (S == Scale::small32) {
      model.backward_small(d1, ctx.sa, ctx.scratch, ctx.grads);
      model.backward_small(d2, ctx.sb, ctx.scratch, ctx.grads);
    } else {
      model.backward_large(d1, ctx.la, ctx.scratch, ctx.grads);
      model.backward_large(d2, ctx.lb, ctx.scratch, ctx.grads);
    }
  }
  return norm;
}

// Runs fn(i, ctx) for i in [0, n) across the thread pool with a static
// schedule. Per-item results land in caller-owned slots, so reductions
// stay deterministic for any fixed thread count.
template <typename Fn>
void parallel_items(std::vector<ThreadCtx>& ctxs, int n, Fn&& fn) {
#pragma omp parallel num_threads(static_cast<int>(ctxs.size()))
  {
    ThreadCtx& ctx = ctxs[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) fn(i, ctx);
  }
}

struct StepLosses {
  double ssl_small = 0.0, ssl_large = 0.0, svdd_small = 0.0, svdd_large = 0.0;

  double ssl() const { return ssl_small + ssl_large; }
  double svdd() const { return svdd_small + svdd_large; }
};

StepLosses run_step(const ModelF& model, const std::vector<ImageF>& images, const TrainConfig& cfg,
                    const pretext::PretextConfig& ps, const pretext::PretextConfig& pl, std::uint64_t step_seed,
                    std::vector<ThreadCtx>& ctxs, bool with_grad) {
  Rng rng(step_seed);
  const int b = cfg.batch_size;
  const float inv_b = 1.f / static_cast<float>(b);
  PairBatch ssl_s = sample_pretext_batch(images, ps, b, rng);
  PairBatch ssl_l = sample_pretext_batch(images, pl, b, rng);
  PairBatch sv_s = sample_svdd_batch(images, ps.patch_size, cfg.svdd_offset_max, b, rng);
  PairBatch sv_l = sample_svdd_batch(images, pl.patch_size, cfg.svdd_offset_max, b, rng);

  StepLosses losses;
  std::vector<double> item(b);
  const float alpha = static_cast<float>(cfg.alpha);

  parallel_items(ctxs, b, [&](int i, ThreadCtx& ctx) {
    item[i] = pretext_pair_step<Scale::small32>(model, ssl_s.a[i], ssl_s.b[i], ssl_s.labels[i], inv_b, ctx,
                                                with_grad, nullptr);
  });
  for (double v : item) losses.ssl_small += v;
  losses.ssl_small /= b;

  parallel_items(ctxs, b, [&](int i, ThreadCtx& ctx) {
    item[i] = pretext_pair_step<Scale::large64>(model, ssl_l.a[i], ssl_l.b[i], ssl_l.labels[i], inv_b, ctx,
                                                with_grad, nullptr);
  });
  for (double v : item) losses.ssl_large += v;
  losses.ssl_large /= b;

  parallel_items(ctxs, b, [&](int i, ThreadCtx& ctx) {
    item[i] = svdd_pair_step<Scale::small32>(model, sv_s.a[i], sv_s.b[i], alpha, ctx, with_grad);
  });
  for (double v : item) losses.svdd_small += v;

  parallel_items(ctxs, b, [&](int i, ThreadCtx& ctx) {
    item[i] = svdd_pair_step<Scale::large64>(model, sv_l.a[i], sv_l.b[i], alpha, ctx, with_grad);
  });
  for (double v : item) losses.svdd_large += v;

  return losses;
}

// Pretext accuracy on pairs drawn from the given image pool.
std::pair<double, double> eval_accuracy(const ModelF& model, const std::vector<ImageF>& pool, const TrainConfig& cfg,
                                        const pretext::PretextConfig& ps, const pretext::PretextConfig& pl,
                                        std::uint64_t seed, std::vector<ThreadCtx>& ctxs) {
  Rng rng(seed);
  const int n = cfg.eval_pairs;
  PairBatch small = sample_pretext_batch(pool, ps, n, rng);
  PairBatch large = sample_pretext_batch(pool, pl, n, rng);
  std::vector<int> hit(n);
  double acc_small = 0.0, acc_large = 0.0;

  parallel_items(ctxs, n, [&](int i, ThreadCtx& ctx) {
    pretext_pair_step<Scale::small32>(model, small.a[i], small.b[i], small.labels[i], 1.f, ctx, false, &hit[i]);
  });
  for (int h : hit) acc_small += h;

  parallel_items(ctxs, n, [&](int i, ThreadCtx& ctx) {
    pretext_pair_step<Scale::large64>(model, large.a[i], large.b[i], large.labels[i], 1.f, ctx, false, &hit[i]);
  });
  for (int h : hit) acc_large += h;

  return {acc_small / n, acc_large / n};
}

void log_epoch(std::ostream* log, const EpochStats& st) {
  if (!log) return;
  std::ostringstream os;
  os << "epoch=" << st.epoch << " ssl=" << std::setprecision(6) << st.ssl_mean << " svdd=" << st.svdd_mean
     << " total=" << st.total_mean << " acc_small=" << st.acc_small << " acc_large=" << st.acc_large
     << " acc=" << st.acc();
  (*log) << os.str() << "\n";
  log->flush();
}

}  // namespace

TrainReport train(ModelF& model, const std::vector<ImageF>& images, const TrainConfig& cfg,
                  const pretext::PretextConfig& pcfg_small, const pretext::PretextConfig& pcfg_large,
                  std::ostream* log) {
  cfg.validate();
  if (images.empty()) throw InvalidArgument("train: empty dataset");
  const int min_dim = 3 * pcfg_large.patch_size + 2 * pcfg_large.grid_gap + 2 * pcfg_large.jitter_max;
  for (const auto& img : images) {
    if (img.h < min_dim || img.w < min_dim) {
      throw GeometryError("training image " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                          " below geometric minimum " + std::to_string(min_dim));
    }
  }

  // Last images stay out of optimization and provide held-out accuracy;
  // with a single image the same pool serves both roles.
  int holdout = static_cast<int>(std::lround(cfg.holdout_fraction * static_cast<double>(images.size())));
  holdout = std::min<int>(holdout, static_cast<int>(images.size()) - 1);
  std::vector<ImageF> train_pool(images.begin(), images.end() - holdout);
  std::vector<ImageF> eval_pool(holdout > 0 ? images.end() - holdout : images.begin(), images.end());

  const int threads = omp_get_max_threads();
  std::vector<ThreadCtx> ctxs(threads);
  for (auto& c : ctxs) c.grads.init(model.params());
  nn::GradStore<float> total_grads;
  total_grads.init(model.params());
  nn::Adam<float> opt(model.params_mutable(), cfg.learning_rate);

  TrainReport report;

  // Epoch 0: evaluation with no update, as a reference point.
  {
    StepLosses l = run_step(model, train_pool, cfg, pcfg_small, pcfg_large, mix_seed(cfg.seed, 0, 0), ctxs, false);
    auto [as, al] = eval_accuracy(model, eval_pool, cfg, pcfg_small, pcfg_large, mix_seed(cfg.seed, 0, 0xE7A1), ctxs);
    EpochStats st{0, l.ssl(), l.svdd(), total_loss(l.ssl(), l.svdd(), cfg.alpha), as, al};
    log_epoch(log, st);
    report.epochs.push_back(st);
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double ssl_sum = 0.0, svdd_sum = 0.0, total_sum = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      for (auto& c : ctxs) c.grads.zero();
      StepLosses l = run_step(model, train_pool, cfg, pcfg_small, pcfg_large,
                              mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step)),
                              ctxs, true);
      const double total = total_loss(l.ssl(), l.svdd(), cfg.alpha);
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                           ": ssl_small=" + std::to_string(l.ssl_small) + " ssl_large=" + std::to_string(l.ssl_large) +
                           " svdd_small=" + std::to_string(l.svdd_small) +
                           " svdd_large=" + std::to_string(l.svdd_large));
      }
      total_grads.zero();
      for (const auto& c : ctxs) total_grads.add(c.grads);
      opt.step(model.params_mutable(), total_grads);
      ssl_sum += l.ssl();
      svdd_sum += l.svdd();
      total_sum += total;
    }
    auto [as, al] =
        eval_accuracy(model, eval_pool, cfg, pcfg_small, pcfg_large, mix_seed(cfg.seed, epoch, 0xE7A1), ctxs);
    EpochStats st{epoch, ssl_sum / cfg.steps_per_epoch, svdd_sum / cfg.steps_per_epoch,
                  total_sum / cfg.steps_per_epoch, as, al};
    log_epoch(log, st);
    report.epochs.push_back(st);
  }
  return report;
}

}  // namespace sclvi::training
