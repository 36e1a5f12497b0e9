#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sclvi/core/image.hpp"
#include "sclvi/core/rng.hpp"
#include "sclvi/core/tensor.hpp"
#include "sclvi/nn/ops.hpp"

namespace sclvi::encoder {

inline constexpr int kEmbedDim = 64;
inline constexpr int kNumRelativeClasses = 12;

enum class Scale { small32, large64 };

inline int patch_size(Scale s) { return s == Scale::small32 ? 32 : 64; }
inline const char* scale_name(Scale s) { return s == Scale::small32 ? "small32" : "large64"; }

// 64-dimensional latent feature of one patch.
struct Embedding {
  std::array<float, kEmbedDim> vector{};
  Scale scale = Scale::small32;
};

struct EncoderConfig {
  int norm_groups = 32;
  std::string activation = "leaky_relu";  // slope 0.1
  std::uint64_t init_seed = 1;
};

// Channel widths of the conv stack. Defaults are the production
// architecture; tests shrink them to keep finite-difference checks cheap.
// Kernel sizes, strides and paddings are fixed and not configurable.
struct EncoderDims {
  int c1 = 96, c2 = 256, c3 = 384, c4 = 384, c5 = 256, c6 = 128;
  int embed = kEmbedDim;
  int sec_c1 = 128;
  int head_hidden = 128;
};

struct LayerShape {
  std::string name;
  int h = 0, w = 0, c = 0;
};

// Shared per-thread scratch buffers (no state carried between calls).
template <typename T>
struct Scratch {
  nn::MatRM<T> col, dcol;
  FeatMap<T> ga, gb;
};

// Saved forward state of one 32x32 encode, enough to run backward.
template <typename T>
struct SmallWs {
  FeatMap<T> in;
  FeatMap<T> act1, act2, act3, act4, act5, act6;
  FeatMap<T> pooled1, pooled2, pooled3;
  FeatMap<T> embed;  // 1x1xE
  nn::GroupNormCache<T> gn[6];
  nn::MaxPoolCache<T> pool[3];
};

template <typename T>
struct SecondaryWs {
  FeatMap<T> quad;  // 2x2xE input map
  FeatMap<T> act1;
  FeatMap<T> embed;  // 1x1xE
  nn::GroupNormCache<T> gn;
};

template <typename T>
struct LargeWs {
  SmallWs<T> sub[4];  // row-major quadrants
  SecondaryWs<T> sec;
};

template <typename T>
struct HeadWs {
  std::vector<T> concat, act1, logits;
};

namespace detail {
template <typename T>
void he_init(nn::Param<T>& p, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& x : p.w) x = static_cast<T>(rng.normal(0.0, stddev));
}
}  // namespace detail

// Main encoder: the Table A1 stack for 32x32x3 patches.
// conv1 5x5 -> pool 3x3/2(p1) -> conv2 5x5(p2) -> pool 3x3/2 ->
// conv3..5 3x3(p1) -> pool 3x3/2(p1) -> conv6 2x2 -> conv7 2x2 -> 1x1xE.
// GroupNorm + leaky-relu after every conv except the final projection.
template <typename T>
class MainEncoder {
 public:
  MainEncoder() = default;

  void build(const EncoderDims& d, int norm_groups, T slope) {
    slope_ = slope;
    const int cs[8] = {3, d.c1, d.c2, d.c3, d.c4, d.c5, d.c6, d.embed};
    const int k[7] = {5, 5, 3, 3, 3, 2, 2};
    const int pad[7] = {0, 2, 1, 1, 1, 0, 0};
    for (int i = 0; i < 7; ++i) {
      geom_[i] = {k[i], k[i], 1, pad[i]};
      w_[i].name = "main.conv" + std::to_string(i + 1) + ".w";
      w_[i].init({cs[i + 1], k[i], k[i], cs[i]});
      b_[i].name = "main.conv" + std::to_string(i + 1) + ".b";
      b_[i].init({cs[i + 1]});
    }
    pool_geom_[0] = {3, 3, 2, 1};
    pool_geom_[1] = {3, 3, 2, 0};
    pool_geom_[2] = {3, 3, 2, 1};
    for (int i = 0; i < 6; ++i) {
      const int ch = cs[i + 1];
      groups_[i] = std::min(norm_groups, ch);
      if (ch % groups_[i] != 0) {
        throw ConfigError("norm_groups " + std::to_string(groups_[i]) + " does not divide channel count " +
                          std::to_string(ch) + " (main conv" + std::to_string(i + 1) + ")");
      }
      gamma_[i].name = "main.gn" + std::to_string(i + 1) + ".gamma";
      gamma_[i].init({ch}, T(1));
      beta_[i].name = "main.gn" + std::to_string(i + 1) + ".beta";
      beta_[i].init({ch});
    }
  }

  void init_weights(Rng& rng) {
    for (int i = 0; i < 7; ++i) {
      const auto& s = w_[i].shape;
      detail::he_init(w_[i], s[1] * s[2] * s[3], rng);
      std::fill(b_[i].w.begin(), b_[i].w.end(), T(0));
    }
  }

  void collect_params(std::vector<nn::Param<T>*>& out) {
    base_index_ = static_cast<int>(out.size());
    for (int i = 0; i < 7; ++i) {
      out.push_back(&w_[i]);
      out.push_back(&b_[i]);
      if (i < 6) {
        out.push_back(&gamma_[i]);
        out.push_back(&beta_[i]);
      }
    }
  }

  const FeatMap<T>& forward(const FeatMap<T>& in, SmallWs<T>& ws, Scratch<T>& s,
                            std::vector<LayerShape>* trace = nullptr) const {
    if (in.c != 3 || in.h != 32 || in.w != 32) {
      throw ShapeError("encode_small expects 32x32x3, got " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                       "x" + std::to_string(in.c));
    }
    ws.in = in;
    FeatMap<T> tmp;
    auto block = [&](const FeatMap<T>& x, int i, FeatMap<T>& act, const char* name) {
      nn::conv_forward(x, w_[i], b_[i], geom_[i], tmp, s.col);
      if (trace) trace->push_back({std::string("Conv") + name, tmp.h, tmp.w, tmp.c});
      FeatMap<T> norm;
      nn::groupnorm_forward(tmp, gamma_[i], beta_[i], groups_[i], norm, ws.gn[i]);
      nn::leaky_relu_forward(norm, slope_, act);
    };
    block(ws.in, 0, ws.act1, "1");
    nn::maxpool_forward(ws.act1, pool_geom_[0], ws.pooled1, ws.pool[0]);
    if (trace) trace->push_back({"Maxpool1", ws.pooled1.h, ws.pooled1.w, ws.pooled1.c});
    block(ws.pooled1, 1, ws.act2, "2");
    nn::maxpool_forward(ws.act2, pool_geom_[1], ws.pooled2, ws.pool[1]);
    if (trace) trace->push_back({"Maxpool2", ws.pooled2.h, ws.pooled2.w, ws.pooled2.c});
    block(ws.pooled2, 2, ws.act3, "3");
    block(ws.act3, 3, ws.act4, "4");
    block(ws.act4, 4, ws.act5, "5");
    nn::maxpool_forward(ws.act5, pool_geom_[2], ws.pooled3, ws.pool[2]);
    if (trace) trace->push_back({"Maxpool3", ws.pooled3.h, ws.pooled3.w, ws.pooled3.c});
    nn::conv_forward(ws.pooled3, w_[5], b_[5], geom_[5], tmp, s.col);
    if (trace) trace->push_back({"Conv6", tmp.h, tmp.w, tmp.c});
    FeatMap<T> norm;
    nn::groupnorm_forward(tmp, gamma_[5], beta_[5], groups_[5], norm, ws.gn[5]);
    nn::leaky_relu_forward(norm, slope_, ws.act6);
    nn::conv_forward(ws.act6, w_[6], b_[6], geom_[6], ws.embed, s.col);
    if (trace) trace->push_back({"Conv7", ws.embed.h, ws.embed.w, ws.embed.c});
    return ws.embed;
  }

  // d_embed: gradient w.r.t. the 1x1xE output. Weight gradients go into
  // grads at this encoder's registered indices; input gradient is dropped.
  void backward(const FeatMap<T>& d_embed, SmallWs<T>& ws, Scratch<T>& s, nn::GradStore<T>& grads) const {
    auto dw = [&](int i) -> std::vector<T>& { return grads.g[base_index_ + i * 4]; };
    auto db = [&](int i) -> std::vector<T>& { return grads.g[base_index_ + i * 4 + 1]; };
    auto dgamma = [&](int i) -> std::vector<T>& { return grads.g[base_index_ + i * 4 + 2]; };
    auto dbeta = [&](int i) -> std::vector<T>& { return grads.g[base_index_ + i * 4 + 3]; };
    // conv7 params sit after six 4-param blocks
    const int i7 = base_index_ + 24;

    nn::conv_backward(ws.act6, d_embed, w_[6], geom_[6], grads.g[i7], grads.g[i7 + 1], &s.ga, s.col, s.dcol);
    auto block_bwd = [&](const FeatMap<T>& g_act, const FeatMap<T>& act, int i, const FeatMap<T>& in,
                         FeatMap<T>* g_in) {
      nn::leaky_relu_backward(g_act, act, slope_, s.gb);
      FeatMap<T> g_conv;
      nn::groupnorm_backward(s.gb, gamma_[i], groups_[i], ws.gn[i], g_conv, dgamma(i), dbeta(i));
      nn::conv_backward(in, g_conv, w_[i], geom_[i], dw(i), db(i), g_in, s.col, s.dcol);
    };
    FeatMap<T> g;
    block_bwd(s.ga, ws.act6, 5, ws.pooled3, &g);                            // conv6
    nn::maxpool_backward(g, pool_geom_[2], ws.pool[2], ws.act5.h, ws.act5.w, s.ga);  // pool3
    block_bwd(s.ga, ws.act5, 4, ws.act4, &g);                               // conv5
    block_bwd(g, ws.act4, 3, ws.act3, &s.ga);                               // conv4
    block_bwd(s.ga, ws.act3, 2, ws.pooled2, &g);                            // conv3
    nn::maxpool_backward(g, pool_geom_[1], ws.pool[1], ws.act2.h, ws.act2.w, s.ga);  // pool2
    block_bwd(s.ga, ws.act2, 1, ws.pooled1, &g);                            // conv2
    nn::maxpool_backward(g, pool_geom_[0], ws.pool[0], ws.act1.h, ws.act1.w, s.ga);  // pool1
    block_bwd(s.ga, ws.act1, 0, ws.in, nullptr);                            // conv1
  }

  int embed_dim() const { return b_[6].shape[0]; }
  const nn::Param<T>& conv_weight(int i) const { return w_[i]; }

 private:
  nn::Param<T> w_[7], b_[7], gamma_[6], beta_[6];
  nn::ConvGeom geom_[7], pool_geom_[3];
  int groups_[6] = {};
  int base_index_ = 0;
  T slope_ = T(0.1);
};

// Secondary encoder: Table A2 head over the 2x2 grid of main-encoder
// outputs of a 64x64 patch. Conv2 is listed with stride 2 on a 1x1 input;
// stride 1 is used since there is no spatial extent to stride over.
template <typename T>
class SecondaryEncoder {
 public:
  void build(const EncoderDims& d, int norm_groups, T slope) {
    slope_ = slope;
    geom1_ = {2, 2, 1, 0};
    geom2_ = {1, 1, 1, 0};
    w1_.name = "secondary.conv1.w";
    w1_.init({d.sec_c1, 2, 2, d.embed});
    b1_.name = "secondary.conv1.b";
    b1_.init({d.sec_c1});
    w2_.name = "secondary.conv2.w";
    w2_.init({d.embed, 1, 1, d.sec_c1});
    b2_.name = "secondary.conv2.b";
    b2_.init({d.embed});
    groups_ = std::min(norm_groups, d.sec_c1);
    if (d.sec_c1 % groups_ != 0) {
      throw ConfigError("norm_groups does not divide secondary channel count " + std::to_string(d.sec_c1));
    }
    gamma_.name = "secondary.gn1.gamma";
    gamma_.init({d.sec_c1}, T(1));
    beta_.name = "secondary.gn1.beta";
    beta_.init({d.sec_c1});
  }

  void init_weights(Rng& rng) {
    detail::he_init(w1_, 4 * w1_.shape[3], rng);
    detail::he_init(w2_, w2_.shape[3], rng);
    std::fill(b1_.w.begin(), b1_.w.end(), T(0));
    std::fill(b2_.w.begin(), b2_.w.end(), T(0));
  }

  void collect_params(std::vector<nn::Param<T>*>& out) {
    base_index_ = static_cast<int>(out.size());
    out.push_back(&w1_);
    out.push_back(&b1_);
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&w2_);
    out.push_back(&b2_);
  }

  const FeatMap<T>& forward(SecondaryWs<T>& ws, Scratch<T>& s, std::vector<LayerShape>* trace = nullptr) const {
    FeatMap<T> tmp, norm;
    nn::conv_forward(ws.quad, w1_, b1_, geom1_, tmp, s.col);
    if (trace) trace->push_back({"Conv1", tmp.h, tmp.w, tmp.c});
    nn::groupnorm_forward(tmp, gamma_, beta_, groups_, norm, ws.gn);
    nn::leaky_relu_forward(norm, slope_, ws.act1);
    nn::conv_forward(ws.act1, w2_, b2_, geom2_, ws.embed, s.col);
    if (trace) trace->push_back({"Conv2", ws.embed.h, ws.embed.w, ws.embed.c});
    return ws.embed;
  }

  void backward(const FeatMap<T>& d_embed, SecondaryWs<T>& ws, Scratch<T>& s, nn::GradStore<T>& grads,
                FeatMap<T>& d_quad) const {
    const int bi = base_index_;
    nn::conv_backward(ws.act1, d_embed, w2_, geom2_, grads.g[bi + 4], grads.g[bi + 5], &s.ga, s.col, s.dcol);
    nn::leaky_relu_backward(s.ga, ws.act1, slope_, s.gb);
    FeatMap<T> g_conv;
    nn::groupnorm_backward(s.gb, gamma_, groups_, ws.gn, g_conv, grads.g[bi + 2], grads.g[bi + 3]);
    nn::conv_backward(ws.quad, g_conv, w1_, geom1_, grads.g[bi], grads.g[bi + 1], &d_quad, s.col, s.dcol);
  }

 private:
  nn::Param<T> w1_, b1_, w2_, b2_, gamma_, beta_;
  nn::ConvGeom geom1_, geom2_;
  int groups_ = 1;
  int base_index_ = 0;
  T slope_ = T(0.1);
};

// 12-way relative-position classifier over a concatenated embedding pair.
template <typename T>
class PairHead {
 public:
  void build(const EncoderDims& d, const std::string& prefix, T slope) {
    slope_ = slope;
    fc1_w_.name = prefix + ".fc1.w";
    fc1_w_.init({d.head_hidden, 2 * d.embed});
    fc1_b_.name = prefix + ".fc1.b";
    fc1_b_.init({d.head_hidden});
    fc2_w_.name = prefix + ".fc2.w";
    fc2_w_.init({kNumRelativeClasses, d.head_hidden});
    fc2_b_.name = prefix + ".fc2.b";
    fc2_b_.init({kNumRelativeClasses});
  }

  // fc2 starts at zero so initial predictions are uniform over classes.
  void init_weights(Rng& rng) {
    detail::he_init(fc1_w_, fc1_w_.shape[1], rng);
    std::fill(fc1_b_.w.begin(), fc1_b_.w.end(), T(0));
    std::fill(fc2_w_.w.begin(), fc2_w_.w.end(), T(0));
    std::fill(fc2_b_.w.begin(), fc2_b_.w.end(), T(0));
  }

  void collect_params(std::vector<nn::Param<T>*>& out) {
    base_index_ = static_cast<int>(out.size());
    out.push_back(&fc1_w_);
    out.push_back(&fc1_b_);
    out.push_back(&fc2_w_);
    out.push_back(&fc2_b_);
  }

  const std::vector<T>& forward(const T* e1, const T* e2, int embed_dim, HeadWs<T>& ws) const {
    ws.concat.assign(2 * embed_dim, T(0));
    std::copy(e1, e1 + embed_dim, ws.concat.begin());
    std::copy(e2, e2 + embed_dim, ws.concat.begin() + embed_dim);
    std::vector<T> pre;
    nn::linear_forward(ws.concat, fc1_w_, fc1_b_, pre);
    ws.act1.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) ws.act1[i] = pre[i] > T(0) ? pre[i] : slope_ * pre[i];
    nn::linear_forward(ws.act1, fc2_w_, fc2_b_, ws.logits);
    return ws.logits;
  }

  void backward(const std::vector<T>& d_logits, HeadWs<T>& ws, nn::GradStore<T>& grads, std::vector<T>& d_e1,
                std::vector<T>& d_e2) const {
    const int bi = base_index_;
    std::vector<T> d_act1, d_pre, d_concat;
    nn::linear_backward(ws.act1, d_logits, fc2_w_, grads.g[bi + 2], grads.g[bi + 3], d_act1);
    d_pre.resize(d_act1.size());
    for (std::size_t i = 0; i < d_act1.size(); ++i) d_pre[i] = d_act1[i] * (ws.act1[i] > T(0) ? T(1) : slope_);
    nn::linear_backward(ws.concat, d_pre, fc1_w_, grads.g[bi], grads.g[bi + 1], d_concat);
    const int e = static_cast<int>(d_concat.size()) / 2;
    d_e1.assign(d_concat.begin(), d_concat.begin() + e);
    d_e2.assign(d_concat.begin() + e, d_concat.end());
  }

 private:
  nn::Param<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  int base_index_ = 0;
  T slope_ = T(0.1);
};

// The full trainable bundle: shared main encoder, secondary encoder for
// the 64-pixel scale, and one classifier head per scale.
template <typename T>
class Model {
 public:
  Model() : Model(EncoderConfig{}, EncoderDims{}) {}

  Model(const EncoderConfig& cfg, const EncoderDims& dims) : cfg_(cfg), dims_(dims) {
    if (cfg.activation != "leaky_relu") {
      throw ConfigError("unsupported activation '" + cfg.activation + "' (supported: leaky_relu)");
    }
    const T slope = T(0.1);
    main_.build(dims, cfg.norm_groups, slope);
    secondary_.build(dims, cfg.norm_groups, slope);
    head_small_.build(dims, "head_small", slope);
    head_large_.build(dims, "head_large", slope);
    main_.collect_params(params_);
    secondary_.collect_params(params_);
    head_small_.collect_params(params_);
    head_large_.collect_params(params_);
    Rng rng(cfg.init_seed);
    main_.init_weights(rng);
    secondary_.init_weights(rng);
    head_small_.init_weights(rng);
    head_large_.init_weights(rng);
  }

  const std::vector<nn::Param<T>*>& params() const { return params_; }
  std::vector<nn::Param<T>*>& params_mutable() { return params_; }
  const EncoderConfig& config() const { return cfg_; }
  const EncoderDims& dims() const { return dims_; }

  const FeatMap<T>& forward_small(const FeatMap<T>& in, SmallWs<T>& ws, Scratch<T>& s,
                                  std::vector<LayerShape>* trace = nullptr) const {
    return main_.forward(in, ws, s, trace);
  }

  void backward_small(const FeatMap<T>& d_embed, SmallWs<T>& ws, Scratch<T>& s, nn::GradStore<T>& grads) const {
    main_.backward(d_embed, ws, s, grads);
  }

  // Quadrants share the main encoder weights; their 1x1 embeddings form
  // the 2x2 fiber map consumed by the secondary encoder.
  const FeatMap<T>& forward_large(const FeatMap<T>& in, LargeWs<T>& ws, Scratch<T>& s,
                                  std::vector<LayerShape>* trace = nullptr) const {
    if (in.c != 3 || in.h != 64 || in.w != 64) {
      throw ShapeError("encode_large expects 64x64x3, got " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                       "x" + std::to_string(in.c));
    }
    const int e = dims_.embed;
    ws.sec.quad.resize(2, 2, e);
    FeatMap<T> sub(32, 32, 3);
    for (int q = 0; q < 4; ++q) {
      const int oy = (q / 2) * 32, ox = (q % 2) * 32;
      for (int y = 0; y < 32; ++y) {
        const T* src = in.data() + ((static_cast<std::size_t>(oy) + y) * 64 + ox) * 3;
        std::copy(src, src + 32 * 3, sub.data() + static_cast<std::size_t>(y) * 32 * 3);
      }
      const FeatMap<T>& emb = main_.forward(sub, ws.sub[q], s);
      std::copy(emb.data(), emb.data() + e, ws.sec.quad.data() + static_cast<std::size_t>(q) * e);
    }
    return secondary_.forward(ws.sec, s, trace);
  }

  void backward_large(const FeatMap<T>& d_embed, LargeWs<T>& ws, Scratch<T>& s, nn::GradStore<T>& grads) const {
    const int e = dims_.embed;
    FeatMap<T> d_quad;
    secondary_.backward(d_embed, ws.sec, s, grads, d_quad);
    FeatMap<T> d_sub(1, 1, e);
    for (int q = 0; q < 4; ++q) {
      std::copy(d_quad.data() + static_cast<std::size_t>(q) * e, d_quad.data() + static_cast<std::size_t>(q + 1) * e,
                d_sub.data());
      main_.backward(d_sub, ws.sub[q], s, grads);
    }
  }

  // Secondary encoder over a caller-assembled 2x2 fiber map (ws.quad).
  // Used by sliding-window inference to reuse shared 32x32 sub-encodes.
  const FeatMap<T>& forward_secondary(SecondaryWs<T>& ws, Scratch<T>& s) const { return secondary_.forward(ws, s); }

  const PairHead<T>& head(Scale s) const { return s == Scale::small32 ? head_small_ : head_large_; }
  const MainEncoder<T>& main() const { return main_; }

 private:
  EncoderConfig cfg_;
  EncoderDims dims_;
  MainEncoder<T> main_;
  SecondaryEncoder<T> secondary_;
  PairHead<T> head_small_, head_large_;
  std::vector<nn::Param<T>*> params_;
};

using ModelF = Model<float>;

// ---- spec-level single-sample operations (production float model) ----

Embedding encode_small(const ModelF& model, const ImageF& patch);
Embedding encode_large(const ModelF& model, const ImageF& patch);
std::vector<float> classify_pair(const ModelF& model, const Embedding& e1, const Embedding& e2);

struct ManifestEntry {
  std::string name;
  std::vector<int> shape;
};
std::vector<ManifestEntry> parameter_manifest(const ModelF& model);

// Layer-by-layer output shapes for architecture conformance checks.
std::vector<LayerShape> trace_small(const ModelF& model);
std::vector<LayerShape> trace_large_secondary(const ModelF& model);

// Batched inference helper (parallel over patches, deterministic).
// Output: n rows of embed_dim floats.
void encode_batch(const ModelF& model, Scale scale, const std::vector<ImageF>& patches, std::vector<float>& out);

}  // namespace sclvi::encoder
