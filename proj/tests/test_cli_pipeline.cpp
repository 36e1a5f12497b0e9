// End-to-end CLI pipeline check: synth -> train -> build-memory (both
// scales) -> inspect -> evaluate -> sweep-eta, through real processes and
// files. argv[1] = sclvi binary, argv[2] = scratch directory.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "[ok]" : "[FAIL]", what.c_str());
  if (!ok) ++failures;
}

int run(const std::string& cmd) {
  std::printf("$ %s\n", cmd.c_str());
  return std::system(cmd.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <sclvi-binary> <scratch-dir>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path dir = fs::path(argv[2]) / "cli_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const fs::path cfg_path = dir / "cfg.ini";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[train]\nepochs = 1\nsteps_per_epoch = 2\nbatch_size = 2\neval_pairs = 4\nseed = 11\n"
        << "[memory]\neta = 3\nstride32 = 32\nstride64 = 64\n"
        << "[synth]\nn_train = 3\nn_test = 4\nseed = 21\n";
  }
  const std::string base = cli + " --config " + cfg_path.string() + " ";
  const std::string data = (dir / "data").string();

  check(run(base + "synth --out " + data) == 0, "synth exits 0");
  check(fs::exists(dir / "data" / "train" / "good" / "train_000.png"), "train images written");
  check(fs::exists(dir / "data" / "ground_truth" / "defect"), "ground truth written");

  const std::string ckpt = (dir / "model.ckpt").string();
  check(run(base + "train --data " + data + " --out " + ckpt + " > " + (dir / "train.log").string()) == 0,
        "train exits 0");
  check(fs::exists(ckpt), "checkpoint written");
  {
    std::ifstream log(dir / "train.log");
    std::string text((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
    check(text.find("epoch=1") != std::string::npos, "structured progress lines");
    check(text.find("ssl=") != std::string::npos, "loss keys in progress lines");
  }

  const std::string b32 = (dir / "b32.bank").string();
  const std::string b64 = (dir / "b64.bank").string();
  check(run(base + "build-memory --ckpt " + ckpt + " --data " + data + " --scale 32 --out " + b32) == 0,
        "build-memory 32 exits 0");
  check(run(base + "build-memory --ckpt " + ckpt + " --data " + data + " --scale 64 --out " + b64) == 0,
        "build-memory 64 exits 0");

  std::string defect_png;
  for (const auto& e : fs::directory_iterator(dir / "data" / "test" / "defect")) {
    defect_png = e.path().string();
    break;
  }
  const std::string heat = (dir / "heat.png").string();
  check(run(base + "inspect " + defect_png + " --ckpt " + ckpt + " --bank32 " + b32 + " --bank64 " + b64 +
            " --out " + heat + " --raw " + (dir / "heat.npy").string()) == 0,
        "inspect exits 0");
  check(fs::exists(heat), "heatmap png written");
  check(fs::exists(heat + ".json"), "heatmap sidecar written");
  check(fs::exists(dir / "heat.npy"), "raw map written");

  const std::string report = (dir / "report.json").string();
  check(run(base + "evaluate --ckpt " + ckpt + " --bank32 " + b32 + " --bank64 " + b64 + " --data " + data +
            " --out " + report + " --sweep-eta 1:3:1 > " + (dir / "eval.log").string()) == 0,
        "evaluate exits 0");
  check(fs::exists(report), "report written");
  {
    std::ifstream log(dir / "eval.log");
    std::string text((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
    check(text.find("detection_auroc=") != std::string::npos, "detection result line");
    check(text.find("eta=2") != std::string::npos, "sweep rows");
  }

  check(run(base + "sweep-eta --ckpt " + ckpt + " --bank32 " + b32 + " --bank64 " + b64 + " --data " + data +
            " --etas 1,2 --out " + (dir / "sweep.json").string() + " > /dev/null") == 0,
        "sweep-eta exits 0");
  check(fs::exists(dir / "sweep.json"), "sweep report written");

  // categorized nonzero-exit error line
  const int rc = run(cli + " evaluate --ckpt /nonexistent.ckpt --bank32 x --bank64 y --data z 2> " +
                     (dir / "err.log").string());
  check(rc != 0, "missing checkpoint exits nonzero");
  {
    std::ifstream log(dir / "err.log");
    std::string text((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
    check(text.find("error: io:") != std::string::npos, "categorized error line");
  }

  std::printf("%s\n", failures == 0 ? "CLI PIPELINE PASS" : "CLI PIPELINE FAIL");
  return failures == 0 ? 0 : 1;
}
