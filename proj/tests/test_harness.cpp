#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sclvi/harness/evaluate.hpp"
#include "support/test_models.hpp"

using namespace sclvi;
using namespace sclvi::harness;

namespace fs = std::filesystem;

TEST_CASE("config file: sections, comments, typed getters, errors, hash") {
  const auto cfg = ConfigFile::parse_string(R"(
# comment
[train]
epochs = 7
alpha = 1e-4  ; trailing comment
[memory]
eta = 10
)");
  CHECK(cfg.get_int("train.epochs", 0) == 7);
  CHECK(cfg.get_double("train.alpha", 0) == doctest::Approx(1e-4));
  CHECK(cfg.get_int("memory.eta", 0) == 10);
  CHECK(cfg.get_int("missing.key", 42) == 42);
  CHECK_THROWS_AS(cfg.get_int("train.alpha", 0), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_string("[broken\nk=v"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse_string("just a line"), ConfigError);

  // hash: stable under reordering, sensitive to values
  const auto a = ConfigFile::parse_string("[s]\nx = 1\ny = 2");
  const auto b = ConfigFile::parse_string("[s]\ny = 2\nx = 1");
  const auto c = ConfigFile::parse_string("[s]\nx = 1\ny = 3");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("run_config_from maps sections onto module configs") {
  const auto cfg = ConfigFile::parse_string(R"(
[train]
epochs = 3
batch_size = 9
[memory]
eta = 4
lambda_cap = 25
stride32 = 8
[anomaly]
fuse_mode = mean
[synth]
texture = stripes
)");
  const RunConfig rc = run_config_from(cfg);
  CHECK(rc.train.epochs == 3);
  CHECK(rc.train.batch_size == 9);
  CHECK(rc.eval.affinity.eta == 4);
  CHECK(rc.eval.affinity.lambda_cap == 25.0);
  CHECK(rc.stride32 == 8);
  CHECK(rc.stride64 == 16);  // default preserved
  CHECK(rc.eval.fuse_mode == anomaly::FuseMode::mean);
  CHECK(rc.synth.texture == "stripes");
  CHECK(rc.eval.config_hash == cfg.hash());
}

TEST_CASE("synthetic dataset: counts, determinism, masks") {
  SynthSpec spec;
  spec.n_train = 5;
  spec.n_test = 6;
  const auto set = generate_synthetic_dataset(spec, 99);
  CHECK(set.train.size() == 5);
  CHECK(set.test.size() == 6);
  int defective = 0;
  for (const auto& s : set.test) {
    if (s.label == 1) {
      ++defective;
      CHECK(s.has_mask);
      CHECK(s.mask.h == s.image.h);
      int mask_px = 0;
      for (auto b : s.mask.v) {
        CHECK((b == 0 || b == 1));
        mask_px += b;
      }
      CHECK(mask_px > 0);
    }
  }
  CHECK(defective == 3);
  for (const auto& s : set.train) CHECK(s.label == 0);

  const auto set2 = generate_synthetic_dataset(spec, 99);
  for (std::size_t i = 0; i < set.test.size(); ++i) CHECK(set.test[i].image.rgb == set2.test[i].image.rgb);
  const auto set3 = generate_synthetic_dataset(spec, 100);
  CHECK(set.train[0].image.rgb != set3.train[0].image.rgb);
}

TEST_CASE("synthetic defects differ from the clean render exactly inside the mask") {
  SynthSpec spec;
  spec.n_train = 1;
  spec.n_test = 8;
  for (const std::string texture : {"checkerboard", "stripes", "blobs"}) {
    SynthSpec sp = spec;
    sp.texture = texture;
    const auto set = generate_synthetic_dataset(sp, 7);
    for (int i = 0; i < sp.n_test; ++i) {
      const auto& s = set.test[i];
      if (s.label == 0) continue;
      const ImageF clean = synthetic_clean_test_image(sp, 7, i);
      int outside_diffs = 0, inside_same = 0;
      for (int y = 0; y < s.image.h; ++y) {
        for (int x = 0; x < s.image.w; ++x) {
          bool differs = false;
          for (int c = 0; c < 3; ++c) differs = differs || s.image.at(y, x, c) != clean.at(y, x, c);
          if (s.mask.at(y, x)) {
            inside_same += !differs;
          } else {
            outside_diffs += differs;
          }
        }
      }
      CHECK(outside_diffs == 0);
      CHECK(inside_same == 0);
    }
  }
}

TEST_CASE("synthetic spec validation") {
  SynthSpec spec;
  spec.defect_max = 500;
  CHECK_THROWS_AS(generate_synthetic_dataset(spec, 1), ConfigError);
  SynthSpec bad;
  bad.texture = "plaid";
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, 1), ConfigError);
}

TEST_CASE("mvtec loader: layout, resize, labels, masks, errors") {
  const fs::path root = fs::temp_directory_path() / "sclvi_fake_mvtec";
  fs::remove_all(root);
  SynthSpec spec;
  spec.n_train = 2;
  spec.n_test = 4;
  spec.image_size = 224 + 32;  // not 256: exercises the resize path
  const auto set = generate_synthetic_dataset(spec, 3);
  write_mvtec_layout(set, (root / "widget").string());

  const auto loaded = load_mvtec_category(root.string(), "widget");
  CHECK(loaded.train.size() == 2);
  CHECK(loaded.test.size() == 4);
  for (const auto& s : loaded.train) {
    CHECK(s.label == 0);
    CHECK(s.image.h == 256);
    CHECK(s.image.w == 256);
  }
  int defective = 0;
  for (const auto& s : loaded.test) {
    CHECK(s.image.h == 256);
    if (s.label == 1) {
      ++defective;
      REQUIRE(s.has_mask);
      CHECK(s.mask.h == 256);
      for (auto b : s.mask.v) CHECK((b == 0 || b == 1));
    }
  }
  CHECK(defective == 2);

  CHECK(list_mvtec_categories(root.string()) == std::vector<std::string>{"widget"});

  // missing mask must be reported with the file path
  fs::path first_mask;
  for (const auto& e : fs::directory_iterator(root / "widget" / "ground_truth" / "defect")) {
    first_mask = e.path();
    break;
  }
  fs::remove(first_mask);
  const std::string mask_stem = first_mask.stem().string();
  CHECK_THROWS_WITH_AS(load_mvtec_category(root.string(), "widget"), doctest::Contains(mask_stem.c_str()), IoError);

  CHECK_THROWS_AS(load_mvtec_category(root.string(), "nonexistent"), IoError);
  fs::remove_all(root);
}

TEST_CASE("EvalReport JSON round-trips losslessly") {
  EvalReport r;
  r.detection_auroc = 0.9785;
  r.segmentation_auroc = 0.8512;
  r.per_category = {{"widget", 0.9785, 0.8512}, {"gadget", 0.5, 0.25}};
  r.seed = 1234567;
  r.config_hash = 0xdeadbeefcafeull;
  r.eta = 10;
  r.lambda_cap = 20.0;
  r.fuse_mode = "multiply";
  r.seg_pooling = "pooled";
  r.stride32 = 4;
  r.stride64 = 16;
  const auto back = EvalReport::from_json(r.to_json());
  CHECK(back.detection_auroc == r.detection_auroc);
  CHECK(back.segmentation_auroc == r.segmentation_auroc);
  CHECK(back.per_category.size() == 2);
  CHECK(back.per_category[1].name == "gadget");
  CHECK(back.per_category[1].segmentation_auroc == 0.25);
  CHECK(back.seed == r.seed);
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.stride64 == 16);
}

TEST_CASE("parse_eta_sweep accepts ranges and lists") {
  CHECK(parse_eta_sweep("1:9:4") == std::vector<int>{1, 5, 9});
  CHECK(parse_eta_sweep("1,5,10,20,50") == std::vector<int>{1, 5, 10, 20, 50});
  CHECK(parse_eta_sweep("7") == std::vector<int>{7});
  CHECK_THROWS_AS(parse_eta_sweep("5:1:1"), ConfigError);
  CHECK_THROWS_AS(parse_eta_sweep("0,3"), ConfigError);
  CHECK_THROWS_AS(parse_eta_sweep(""), ConfigError);
}

TEST_CASE("category table carries the aggregate rows in the published layout") {
  std::vector<CategoryResult> rows;
  for (const std::string c : {"carpet", "grid", "leather", "tile", "wood", "bottle", "cable", "capsule", "hazelnut",
                              "metal_nut", "pill", "screw", "toothbrush", "transistor", "zipper"}) {
    rows.push_back({c, 0.9, 0.8});
  }
  std::ostringstream os;
  print_category_table(os, rows);
  const std::string t = os.str();
  CHECK(t.find("Category") != std::string::npos);
  CHECK(t.find("carpet") != std::string::npos);
  CHECK(t.find("Textures") != std::string::npos);
  CHECK(t.find("Objects") != std::string::npos);
  CHECK(t.find("Mean") != std::string::npos);
  // aggregates come after all category rows
  CHECK(t.rfind("zipper") < t.find("Textures"));
  CHECK(t.find("Textures") < t.find("Objects"));
  CHECK(t.find("Objects") < t.find("Mean"));
}

TEST_CASE("evaluate: scale validation, mask requirement, determinism on a tiny set") {
  using encoder::Scale;
  encoder::Model<float> model(test::shrunken_config(5), test::shrunken_dims());
  SynthSpec spec;
  spec.n_train = 2;
  spec.n_test = 6;
  const auto set = generate_synthetic_dataset(spec, 17);
  std::vector<ImageF> train_images;
  for (const auto& s : set.train) train_images.push_back(s.image);
  const auto bank32 = memory::build_memory(model, train_images, Scale::small32, 32);
  const auto bank64 = memory::build_memory(model, train_images, Scale::large64, 64);

  EvalConfig cfg;
  cfg.affinity.eta = 3;
  EvalCache cache;
  const auto r1 = evaluate(model, bank32, bank64, set.test, cfg, &cache);
  const auto r2 = evaluate(model, bank32, bank64, set.test, cfg);
  CHECK(r1.detection_auroc == r2.detection_auroc);
  CHECK(r1.segmentation_auroc == r2.segmentation_auroc);
  CHECK(r1.detection_auroc >= 0.0);
  CHECK(r1.detection_auroc <= 1.0);
  CHECK(r1.stride32 == 32);
  CHECK(cache.grids32.size() == set.test.size());

  // swapped banks are rejected
  CHECK_THROWS_AS(evaluate(model, bank64, bank32, set.test, cfg), InvalidArgument);

  auto broken = set.test;
  for (auto& s : broken) {
    if (s.label == 1) {
      s.has_mask = false;
      break;
    }
  }
  CHECK_THROWS_AS(evaluate(model, bank32, bank64, broken, cfg), InvalidArgument);

  // eta sweep reuses the cache and reports one row per eta
  const auto rows = sweep_eta(cache, bank32, bank64, {1, 2, 3}, cfg);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.detection_auroc >= 0.0);
    CHECK(row.detection_auroc <= 1.0);
  }
  // eta = config eta must reproduce the evaluate() numbers exactly
  const auto again = sweep_eta(cache, bank32, bank64, {3}, cfg);
  CHECK(again[0].detection_auroc == r1.detection_auroc);
  CHECK(again[0].segmentation_auroc == r1.segmentation_auroc);
}

TEST_CASE("per-image segmentation pooling averages per-image AUROCs") {
  using encoder::Scale;
  encoder::Model<float> model(test::shrunken_config(5), test::shrunken_dims());
  SynthSpec spec;
  spec.n_train = 1;
  spec.n_test = 4;
  const auto set = generate_synthetic_dataset(spec, 29);
  std::vector<ImageF> train_images{set.train[0].image};
  const auto bank32 = memory::build_memory(model, train_images, Scale::small32, 32);
  const auto bank64 = memory::build_memory(model, train_images, Scale::large64, 64);
  EvalConfig cfg;
  cfg.affinity.eta = 2;
  cfg.seg_pooling = "per_image";
  const auto r = evaluate(model, bank32, bank64, set.test, cfg);
  CHECK(r.segmentation_auroc >= 0.0);
  CHECK(r.segmentation_auroc <= 1.0);
  CHECK(r.seg_pooling == "per_image");
}
