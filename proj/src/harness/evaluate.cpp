#include "sclvi/harness/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "sclvi/harness/metrics.hpp"

namespace sclvi::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;
using encoder::Scale;

std::string EvalReport::to_json() const {
  json j{{"detection_auroc", detection_auroc},
         {"segmentation_auroc", segmentation_auroc},
         {"seed", seed},
         {"config_hash", config_hash},
         {"eta", eta},
         {"lambda_cap", lambda_cap},
         {"fuse_mode", fuse_mode},
         {"seg_pooling", seg_pooling},
         {"stride32", stride32},
         {"stride64", stride64}};
  j["per_category"] = json::array();
  for (const auto& c : per_category) {
    j["per_category"].push_back(
        {{"name", c.name}, {"detection_auroc", c.detection_auroc}, {"segmentation_auroc", c.segmentation_auroc}});
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.detection_auroc = j.at("detection_auroc");
  r.segmentation_auroc = j.at("segmentation_auroc");
  r.seed = j.at("seed");
  r.config_hash = j.at("config_hash");
  r.eta = j.at("eta");
  r.lambda_cap = j.at("lambda_cap");
  r.fuse_mode = j.at("fuse_mode");
  r.seg_pooling = j.at("seg_pooling");
  r.stride32 = j.at("stride32");
  r.stride64 = j.at("stride64");
  for (const auto& c : j.at("per_category")) {
    r.per_category.push_back({c.at("name"), c.at("detection_auroc"), c.at("segmentation_auroc")});
  }
  return r;
}

void EvalReport::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report: " + path);
  os << to_json() << "\n";
}

EvalReport EvalReport::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read report: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

namespace {

struct ScoredSet {
  std::vector<double> detection_scores;
  std::vector<int> detection_labels;
  double segmentation_auroc = 0.0;
  bool has_masks = false;
};

ScoredSet score_test_set(const std::vector<anomaly::AnomalyMap>& fused, const std::vector<int>& labels,
                         const std::vector<const MaskU8*>& masks, const std::string& seg_pooling) {
  ScoredSet out;
  const std::size_t n = fused.size();
  out.detection_scores.reserve(n);
  out.detection_labels = labels;
  for (const auto& m : fused) out.detection_scores.push_back(anomaly::image_score(m));

  bool any_mask = false;
  for (const auto* m : masks) any_mask = any_mask || (m != nullptr);
  if (!any_mask) return out;
  out.has_masks = true;

  if (seg_pooling == "pooled") {
    // One ranking over every pixel of the whole test set.
    std::vector<double> px;
    std::vector<int> py;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& map = fused[i];
      px.insert(px.end(), map.pixels.begin(), map.pixels.end());
      if (masks[i]) {
        for (auto b : masks[i]->v) py.push_back(b ? 1 : 0);
      } else {
        py.insert(py.end(), map.pixels.size(), 0);
      }
    }
    out.segmentation_auroc = auroc(px, py);
  } else if (seg_pooling == "per_image") {
    double sum = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!masks[i]) continue;
      bool has_pos = false, has_neg = false;
      for (auto b : masks[i]->v) (b ? has_pos : has_neg) = true;
      if (!has_pos || !has_neg) continue;
      std::vector<int> py(masks[i]->v.begin(), masks[i]->v.end());
      sum += auroc(fused[i].pixels, py);
      ++counted;
    }
    if (counted == 0) throw InvalidArgument("per_image segmentation: no image with both pixel classes");
    out.segmentation_auroc = sum / counted;
  } else {
    throw ConfigError("unknown seg_pooling '" + seg_pooling + "' (pooled|per_image)");
  }
  return out;
}

std::vector<anomaly::AnomalyMap> maps_from_grids(const std::vector<encoder::WindowGrid>& grids,
                                                 const memory::MemoryBank& bank,
                                                 const memory::AffinityConfig& affinity) {
  std::vector<anomaly::AnomalyMap> maps;
  maps.reserve(grids.size());
  for (const auto& g : grids) maps.push_back(anomaly::aggregate_pixels(anomaly::score_grid(g, bank, affinity)));
  return maps;
}

}  // namespace

EvalReport evaluate(const encoder::ModelF& model, const memory::MemoryBank& bank32,
                    const memory::MemoryBank& bank64, const std::vector<Sample>& test, const EvalConfig& cfg,
                    EvalCache* cache) {
  if (bank32.scale != Scale::small32 || bank64.scale != Scale::large64) {
    throw InvalidArgument("evaluate: banks must be (small32, large64) in that order");
  }
  if (test.empty()) throw InvalidArgument("evaluate: empty test set");
  cfg.affinity.validate();
  for (const auto& s : test) {
    if (s.label == 1 && !s.has_mask) {
      throw InvalidArgument("evaluate: defective test sample '" + s.name + "' carries no ground-truth mask");
    }
  }

  EvalCache local;
  EvalCache& c = cache ? *cache : local;
  c.grids32.clear();
  c.grids64.clear();
  c.labels.clear();
  c.masks.clear();
  for (const auto& s : test) {
    c.grids32.push_back(encoder::encode_windows(model, s.image, Scale::small32, bank32.stride));
    c.grids64.push_back(encoder::encode_windows(model, s.image, Scale::large64, bank64.stride));
    c.labels.push_back(s.label);
    c.masks.push_back(s.has_mask ? &s.mask : nullptr);
  }

  auto maps32 = maps_from_grids(c.grids32, bank32, cfg.affinity);
  auto maps64 = maps_from_grids(c.grids64, bank64, cfg.affinity);
  auto fused = anomaly::fuse_scales_batch(maps64, maps32, cfg.fuse_mode);
  const ScoredSet scored = score_test_set(fused, c.labels, c.masks, cfg.seg_pooling);

  EvalReport r;
  r.detection_auroc = auroc(scored.detection_scores, scored.detection_labels);
  r.segmentation_auroc = scored.has_masks ? scored.segmentation_auroc : 0.0;
  r.seed = cfg.seed;
  r.config_hash = cfg.config_hash;
  r.eta = cfg.affinity.eta;
  r.lambda_cap = cfg.affinity.lambda_cap;
  r.fuse_mode = anomaly::to_string(cfg.fuse_mode);
  r.seg_pooling = cfg.seg_pooling;
  r.stride32 = bank32.stride;
  r.stride64 = bank64.stride;
  if (!test.empty()) {
    r.per_category.push_back({test.front().category, r.detection_auroc, r.segmentation_auroc});
  }
  return r;
}

std::vector<EtaSweepRow> sweep_eta(const EvalCache& cache, const memory::MemoryBank& bank32,
                                   const memory::MemoryBank& bank64, const std::vector<int>& etas,
                                   const EvalConfig& cfg) {
  if (etas.empty()) throw InvalidArgument("sweep_eta: empty eta list");
  std::vector<EtaSweepRow> rows;
  for (int eta : etas) {
    memory::AffinityConfig a = cfg.affinity;
    a.eta = eta;
    auto maps32 = maps_from_grids(cache.grids32, bank32, a);
    auto maps64 = maps_from_grids(cache.grids64, bank64, a);
    auto fused = anomaly::fuse_scales_batch(maps64, maps32, cfg.fuse_mode);
    const ScoredSet scored = score_test_set(fused, cache.labels, cache.masks, cfg.seg_pooling);
    EtaSweepRow row;
    row.eta = eta;
    row.detection_auroc = auroc(scored.detection_scores, scored.detection_labels);
    row.segmentation_auroc = scored.has_masks ? scored.segmentation_auroc : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<int> parse_eta_sweep(const std::string& text) {
  std::vector<int> out;
  if (text.find(':') != std::string::npos) {
    int a = 0, b = 0, step = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(text);
    if (!(is >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || step < 1 || b < a) {
      throw ConfigError("bad eta sweep '" + text + "' (expected a:b:step)");
    }
    for (int e = a; e <= b; e += step) out.push_back(e);
  } else {
    std::istringstream is(text);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (tok.empty()) continue;
      out.push_back(std::stoi(tok));
    }
  }
  if (out.empty()) throw ConfigError("bad eta sweep '" + text + "'");
  for (int e : out) {
    if (e < 1) throw ConfigError("eta must be >= 1 in sweep '" + text + "'");
  }
  return out;
}

namespace {

const std::set<std::string> kTextureCategories{"carpet", "grid", "leather", "tile", "wood"};
const std::set<std::string> kObjectCategories{"bottle",    "cable", "capsule",    "hazelnut",   "metal_nut",
                                              "pill",      "screw", "toothbrush", "transistor", "zipper"};

}  // namespace

void print_category_table(std::ostream& os, const std::vector<CategoryResult>& rows) {
  os << std::left << std::setw(14) << "Category" << std::right << std::setw(11) << "Detection" << std::setw(15)
     << "Segmentation" << "\n";
  auto line = [&](const std::string& name, double det, double seg) {
    os << std::left << std::setw(14) << name << std::right << std::setw(11) << std::fixed << std::setprecision(2)
       << det * 100.0 << std::setw(15) << seg * 100.0 << "\n";
  };
  double tex_det = 0, tex_seg = 0, obj_det = 0, obj_seg = 0, all_det = 0, all_seg = 0;
  int tex_n = 0, obj_n = 0;
  for (const auto& r : rows) {
    line(r.name, r.detection_auroc, r.segmentation_auroc);
    all_det += r.detection_auroc;
    all_seg += r.segmentation_auroc;
    if (kTextureCategories.count(r.name)) {
      tex_det += r.detection_auroc;
      tex_seg += r.segmentation_auroc;
      ++tex_n;
    } else if (kObjectCategories.count(r.name)) {
      obj_det += r.detection_auroc;
      obj_seg += r.segmentation_auroc;
      ++obj_n;
    }
  }
  if (tex_n > 0) line("Textures", tex_det / tex_n, tex_seg / tex_n);
  if (obj_n > 0) line("Objects", obj_det / obj_n, obj_seg / obj_n);
  if (!rows.empty()) line("Mean", all_det / rows.size(), all_seg / rows.size());
}

EvalReport run_mvtec_protocol(const std::string& root, std::vector<std::string> categories,
                              const MvtecRunConfig& cfg, std::ostream& log) {
  if (categories.empty()) categories = list_mvtec_categories(root);
  if (categories.empty()) throw IoError("no dataset categories found under " + root);
  if (!cfg.workdir.empty()) fs::create_directories(cfg.workdir);

  EvalReport combined;
  for (const auto& cat : categories) {
    log << "category=" << cat << " phase=load\n";
    const SampleSet set = load_mvtec_category(root, cat);
    std::vector<ImageF> train_images;
    train_images.reserve(set.train.size());
    for (const auto& s : set.train) train_images.push_back(s.image);

    const fs::path ckpt_path = fs::path(cfg.workdir.empty() ? "." : cfg.workdir) / (cat + ".ckpt");
    encoder::ModelF model;
    if (!cfg.workdir.empty() && fs::exists(ckpt_path)) {
      log << "category=" << cat << " phase=load-checkpoint path=" << ckpt_path.string() << "\n";
      model = encoder::load_checkpoint(ckpt_path.string());
    } else {
      log << "category=" << cat << " phase=train images=" << train_images.size() << "\n";
      model = encoder::ModelF(cfg.enc, encoder::EncoderDims{});
      training::train(model, train_images, cfg.train, cfg.pre_small, cfg.pre_large, &log);
      if (!cfg.workdir.empty()) encoder::save_checkpoint(ckpt_path.string(), model, cfg.pre_small, cfg.pre_large);
    }

    log << "category=" << cat << " phase=build-memory\n";
    auto load_or_build = [&](Scale scale, int stride, const std::string& tag) {
      const fs::path bank_path = fs::path(cfg.workdir.empty() ? "." : cfg.workdir) / (cat + "." + tag + ".bank");
      if (!cfg.workdir.empty() && fs::exists(bank_path)) return memory::load_bank(bank_path.string());
      auto bank = memory::build_memory(model, train_images, scale, stride, {}, cfg.bank_max_rows,
                                       cfg.train.seed);
      if (!cfg.workdir.empty()) memory::save_bank(bank, bank_path.string());
      return bank;
    };
    const auto bank32 = load_or_build(Scale::small32, cfg.stride32, "s32");
    const auto bank64 = load_or_build(Scale::large64, cfg.stride64, "s64");

    log << "category=" << cat << " phase=evaluate test=" << set.test.size() << "\n";
    EvalReport r = evaluate(model, bank32, bank64, set.test, cfg.eval);
    combined.per_category.push_back({cat, r.detection_auroc, r.segmentation_auroc});
    log << "category=" << cat << " detection_auroc=" << r.detection_auroc
        << " segmentation_auroc=" << r.segmentation_auroc << "\n";
  }

  double det = 0, seg = 0;
  for (const auto& c : combined.per_category) {
    det += c.detection_auroc;
    seg += c.segmentation_auroc;
  }
  combined.detection_auroc = det / combined.per_category.size();
  combined.segmentation_auroc = seg / combined.per_category.size();
  combined.seed = cfg.eval.seed;
  combined.config_hash = cfg.eval.config_hash;
  combined.eta = cfg.eval.affinity.eta;
  combined.lambda_cap = cfg.eval.affinity.lambda_cap;
  combined.fuse_mode = anomaly::to_string(cfg.eval.fuse_mode);
  combined.seg_pooling = cfg.eval.seg_pooling;
  combined.stride32 = cfg.stride32;
  combined.stride64 = cfg.stride64;
  print_category_table(log, combined.per_category);
  return combined;
}

RunConfig run_config_from(const ConfigFile& f) {
  RunConfig rc;
  rc.enc.norm_groups = f.get_int("encoder.norm_groups", rc.enc.norm_groups);
  rc.enc.activation = f.get_str("encoder.activation", rc.enc.activation);
  rc.enc.init_seed = f.get_u64("encoder.init_seed", rc.enc.init_seed);

  auto fill_pretext = [&](pretext::PretextConfig& p) {
    p.jitter_max = f.get_int("pretext.jitter_max", p.jitter_max);
    p.gray_shift_max = f.get_int("pretext.gray_shift_max", p.gray_shift_max);
    p.grid_gap = f.get_int("pretext.grid_gap", p.grid_gap);
  };
  fill_pretext(rc.pre_small);
  fill_pretext(rc.pre_large);

  rc.train.alpha = f.get_double("train.alpha", rc.train.alpha);
  rc.train.svdd_offset_max = f.get_int("train.svdd_offset_max", rc.train.svdd_offset_max);
  rc.train.batch_size = f.get_int("train.batch_size", rc.train.batch_size);
  rc.train.epochs = f.get_int("train.epochs", rc.train.epochs);
  rc.train.learning_rate = f.get_double("train.learning_rate", rc.train.learning_rate);
  rc.train.seed = f.get_u64("train.seed", rc.train.seed);
  rc.train.steps_per_epoch = f.get_int("train.steps_per_epoch", rc.train.steps_per_epoch);
  rc.train.holdout_fraction = f.get_double("train.holdout_fraction", rc.train.holdout_fraction);
  rc.train.eval_pairs = f.get_int("train.eval_pairs", rc.train.eval_pairs);

  rc.eval.affinity.eta = f.get_int("memory.eta", rc.eval.affinity.eta);
  rc.eval.affinity.lambda_cap = f.get_double("memory.lambda_cap", rc.eval.affinity.lambda_cap);
  rc.stride32 = f.get_int("memory.stride32", rc.stride32);
  rc.stride64 = f.get_int("memory.stride64", rc.stride64);
  rc.bank_max_rows = f.get_int("memory.max_rows", rc.bank_max_rows);

  rc.eval.fuse_mode = anomaly::fuse_mode_from_string(f.get_str("anomaly.fuse_mode", "multiply"));
  rc.eval.seg_pooling = f.get_str("eval.seg_pooling", rc.eval.seg_pooling);
  rc.eval.seed = f.get_u64("eval.seed", rc.eval.seed);
  rc.eval.config_hash = f.hash();

  rc.synth.n_train = f.get_int("synth.n_train", rc.synth.n_train);
  rc.synth.n_test = f.get_int("synth.n_test", rc.synth.n_test);
  rc.synth.texture = f.get_str("synth.texture", rc.synth.texture);
  rc.synth.defect_min = f.get_int("synth.defect_min", rc.synth.defect_min);
  rc.synth.defect_max = f.get_int("synth.defect_max", rc.synth.defect_max);
  rc.synth.image_size = f.get_int("synth.image_size", rc.synth.image_size);
  rc.synth_seed = f.get_u64("synth.seed", rc.synth_seed);
  return rc;
}

}  // namespace sclvi::harness
