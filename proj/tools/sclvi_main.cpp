// sclvi: self-supervised context learning for visual defect inspection.
// Subcommands: synth, train, build-memory, inspect, evaluate, sweep-eta.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "sclvi/anomaly/map.hpp"
#include "sclvi/encoder/checkpoint.hpp"
#include "sclvi/encoder/windows.hpp"
#include "sclvi/harness/evaluate.hpp"
#include "sclvi/harness/metrics.hpp"
#include "sclvi/memory/bank.hpp"
#include "sclvi/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace sclvi;

namespace {

harness::RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return harness::run_config_from(harness::ConfigFile{});
  return harness::run_config_from(harness::ConfigFile::parse_file(path));
}

std::vector<ImageF> train_images_from(const std::string& data_dir) {
  const auto set = harness::load_mvtec_category(fs::path(data_dir).parent_path().string(),
                                                fs::path(data_dir).filename().string());
  std::vector<ImageF> images;
  images.reserve(set.train.size());
  for (const auto& s : set.train) images.push_back(s.image);
  return images;
}

int run(int argc, char** argv) {
  CLI::App app{"SCL-VI unsupervised defect inspection"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "config file (flat key=value with [sections])");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset in MVTec layout");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the encoders on defect-free images");
  std::string train_data, train_out;
  train_cmd->add_option("--data", train_data, "dataset category directory (train/good inside)")->required();
  train_cmd->add_option("--out", train_out, "output checkpoint path")->required();

  // build-memory
  auto* build = app.add_subcommand("build-memory", "build the normal-feature memory bank");
  std::string bm_ckpt, bm_data, bm_out;
  int bm_scale = 32, bm_stride = 0;
  build->add_option("--ckpt", bm_ckpt, "trained checkpoint")->required();
  build->add_option("--data", bm_data, "dataset category directory")->required();
  build->add_option("--scale", bm_scale, "patch scale {32,64}")->required();
  build->add_option("--stride", bm_stride, "scan stride (default: per-scale config)");
  build->add_option("--out", bm_out, "output bank path")->required();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "anomaly heatmap for one image");
  std::string in_image, in_ckpt, in_bank32, in_bank64, in_png, in_raw;
  inspect->add_option("image", in_image, "input image")->required();
  inspect->add_option("--ckpt", in_ckpt, "trained checkpoint")->required();
  inspect->add_option("--bank32", in_bank32, "32-scale memory bank")->required();
  inspect->add_option("--bank64", in_bank64, "64-scale memory bank")->required();
  inspect->add_option("--out", in_png, "output heatmap PNG")->required();
  inspect->add_option("--raw", in_raw, "also dump the raw float map (.npy)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "detection/segmentation AUROC on a test split");
  std::string ev_ckpt, ev_bank32, ev_bank64, ev_data, ev_report, ev_sweep, ev_mvtec, ev_workdir;
  std::vector<std::string> ev_categories;
  eval_cmd->add_option("--ckpt", ev_ckpt, "trained checkpoint");
  eval_cmd->add_option("--bank32", ev_bank32, "32-scale memory bank");
  eval_cmd->add_option("--bank64", ev_bank64, "64-scale memory bank");
  eval_cmd->add_option("--data", ev_data, "dataset category directory");
  eval_cmd->add_option("--out", ev_report, "output report JSON");
  eval_cmd->add_option("--sweep-eta", ev_sweep, "eta sweep, a:b:step or comma list");
  eval_cmd->add_option("--mvtec-root", ev_mvtec, "run the full per-category protocol under this root");
  eval_cmd->add_option("--categories", ev_categories, "categories for --mvtec-root (default: all)");
  eval_cmd->add_option("--workdir", ev_workdir, "cache dir for per-category checkpoints/banks");

  // sweep-eta
  auto* sweep_cmd = app.add_subcommand("sweep-eta", "eta sweep from cached banks and embeddings");
  std::string sw_ckpt, sw_bank32, sw_bank64, sw_data, sw_report, sw_etas = "1,5,10,20,50";
  sweep_cmd->add_option("--ckpt", sw_ckpt, "trained checkpoint")->required();
  sweep_cmd->add_option("--bank32", sw_bank32, "32-scale memory bank")->required();
  sweep_cmd->add_option("--bank64", sw_bank64, "64-scale memory bank")->required();
  sweep_cmd->add_option("--data", sw_data, "dataset category directory")->required();
  sweep_cmd->add_option("--etas", sw_etas, "a:b:step or comma list (default 1,5,10,20,50)");
  sweep_cmd->add_option("--out", sw_report, "output report JSON");

  CLI11_PARSE(app, argc, argv);
  const harness::RunConfig rc = load_run_config(config_path);

  if (synth->parsed()) {
    const auto set = harness::generate_synthetic_dataset(rc.synth, rc.synth_seed);
    harness::write_mvtec_layout(set, synth_out);
    std::cout << "wrote " << set.train.size() << " train / " << set.test.size() << " test images to " << synth_out
              << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    const auto images = train_images_from(train_data);
    encoder::ModelF model(rc.enc, encoder::EncoderDims{});
    training::train(model, images, rc.train, rc.pre_small, rc.pre_large, &std::cout);
    encoder::save_checkpoint(train_out, model, rc.pre_small, rc.pre_large);
    std::cout << "checkpoint=" << train_out << "\n";
    return 0;
  }

  if (build->parsed()) {
    if (bm_scale != 32 && bm_scale != 64) throw ConfigError("--scale must be 32 or 64");
    const auto scale = bm_scale == 32 ? encoder::Scale::small32 : encoder::Scale::large64;
    if (bm_stride == 0) bm_stride = bm_scale == 32 ? rc.stride32 : rc.stride64;
    const auto model = encoder::load_checkpoint(bm_ckpt);
    const auto set = harness::load_mvtec_category(fs::path(bm_data).parent_path().string(),
                                                  fs::path(bm_data).filename().string());
    std::vector<ImageF> images;
    std::vector<std::string> names;
    for (const auto& s : set.train) {
      images.push_back(s.image);
      names.push_back(s.name);
    }
    const auto bank = memory::build_memory(model, images, scale, bm_stride, names, rc.bank_max_rows, rc.train.seed);
    memory::save_bank(bank, bm_out);
    std::cout << "bank=" << bm_out << " rows=" << bank.rows() << " stride=" << bank.stride << "\n";
    return 0;
  }

  if (inspect->parsed()) {
    const auto model = encoder::load_checkpoint(in_ckpt);
    const auto bank32 = memory::load_bank(in_bank32);
    const auto bank64 = memory::load_bank(in_bank64);
    const ImageF img = load_image_rgb(in_image, 256);
    const auto g32 = anomaly::score_patches(model, img, bank32, encoder::Scale::small32, bank32.stride, rc.eval.affinity);
    const auto g64 = anomaly::score_patches(model, img, bank64, encoder::Scale::large64, bank64.stride, rc.eval.affinity);
    const auto fused = anomaly::fuse_scales(anomaly::aggregate_pixels(g64), anomaly::aggregate_pixels(g32),
                                            rc.eval.fuse_mode);
    anomaly::save_anomaly_png(fused, in_png, in_raw);
    std::cout << "heatmap=" << in_png << " image_score=" << anomaly::image_score(fused) << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    if (!ev_mvtec.empty()) {
      harness::MvtecRunConfig mc;
      mc.enc = rc.enc;
      mc.pre_small = rc.pre_small;
      mc.pre_large = rc.pre_large;
      mc.train = rc.train;
      mc.eval = rc.eval;
      mc.stride32 = rc.stride32;
      mc.stride64 = rc.stride64;
      mc.bank_max_rows = rc.bank_max_rows;
      mc.workdir = ev_workdir;
      const auto report = harness::run_mvtec_protocol(ev_mvtec, ev_categories, mc, std::cout);
      if (!ev_report.empty()) report.save(ev_report);
      return 0;
    }
    if (ev_ckpt.empty() || ev_bank32.empty() || ev_bank64.empty() || ev_data.empty()) {
      throw ConfigError("evaluate needs --ckpt, --bank32, --bank64 and --data (or --mvtec-root)");
    }
    const auto model = encoder::load_checkpoint(ev_ckpt);
    const auto bank32 = memory::load_bank(ev_bank32);
    const auto bank64 = memory::load_bank(ev_bank64);
    const auto set = harness::load_mvtec_category(fs::path(ev_data).parent_path().string(),
                                                  fs::path(ev_data).filename().string());
    harness::EvalCache cache;
    const auto report = harness::evaluate(model, bank32, bank64, set.test, rc.eval, &cache);
    std::cout << "detection_auroc=" << report.detection_auroc << " segmentation_auroc=" << report.segmentation_auroc
              << "\n";
    harness::print_category_table(std::cout, report.per_category);
    if (!ev_report.empty()) report.save(ev_report);
    if (!ev_sweep.empty()) {
      const auto etas = harness::parse_eta_sweep(ev_sweep);
      for (const auto& row : harness::sweep_eta(cache, bank32, bank64, etas, rc.eval)) {
        std::cout << "eta=" << row.eta << " detection_auroc=" << row.detection_auroc
                  << " segmentation_auroc=" << row.segmentation_auroc << "\n";
      }
    }
    return 0;
  }

  if (sweep_cmd->parsed()) {
    const auto model = encoder::load_checkpoint(sw_ckpt);
    const auto bank32 = memory::load_bank(sw_bank32);
    const auto bank64 = memory::load_bank(sw_bank64);
    const auto set = harness::load_mvtec_category(fs::path(sw_data).parent_path().string(),
                                                  fs::path(sw_data).filename().string());
    harness::EvalCache cache;
    harness::evaluate(model, bank32, bank64, set.test, rc.eval, &cache);
    const auto etas = harness::parse_eta_sweep(sw_etas);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : harness::sweep_eta(cache, bank32, bank64, etas, rc.eval)) {
      std::cout << "eta=" << row.eta << " detection_auroc=" << row.detection_auroc
                << " segmentation_auroc=" << row.segmentation_auroc << "\n";
      rows.push_back({{"eta", row.eta},
                      {"detection_auroc", row.detection_auroc},
                      {"segmentation_auroc", row.segmentation_auroc}});
    }
    if (!sw_report.empty()) {
      std::ofstream os(sw_report);
      if (!os) throw IoError("cannot write report: " + sw_report);
      os << rows.dump(2) << "\n";
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: unexpected: " << e.what() << "\n";
    return 3;
  }
}
