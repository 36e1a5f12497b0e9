#include "sclvi/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "sclvi/core/rng.hpp"

namespace sclvi::harness {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (n_train < 1 || n_test < 2) throw ConfigError("synth: need n_train >= 1 and n_test >= 2");
  if (texture != "checkerboard" && texture != "stripes" && texture != "blobs") {
    throw ConfigError("synth: unknown texture family '" + texture + "' (checkerboard|stripes|blobs)");
  }
  if (defect_min < 4 || defect_max < defect_min) throw ConfigError("synth: defect size range invalid");
  if (defect_max > image_size) {
    throw ConfigError("synth: defect size " + std::to_string(defect_max) + " exceeds image size " +
                      std::to_string(image_size));
  }
  if (image_size < 224) throw ConfigError("synth: image_size must be >= 224 (3x64 grid plus jitter margin)");
}

namespace {

constexpr float kBase = 0.45f;
constexpr float kPatternAmp = 0.15f;
constexpr float kTintRange = 0.30f;
constexpr float kNoiseSigma = 0.008f;

// Luminance pattern in [-1, 1] per texture family.
struct TextureParams {
  std::string family;
  int period = 32;
  int phase_y = 0, phase_x = 0;
  bool vertical = false;                   // stripes
  std::vector<std::array<int, 3>> blobs;   // y, x, radius
};

TextureParams draw_texture(const std::string& family, int size, Rng& rng) {
  TextureParams t;
  t.family = family;
  t.period = rng.uniform_int(26, 38);
  t.phase_y = rng.uniform_int(0, t.period - 1);
  t.phase_x = rng.uniform_int(0, t.period - 1);
  t.vertical = rng.uniform() < 0.5;
  if (family == "blobs") {
    const int count = 140;
    t.blobs.reserve(count);
    for (int i = 0; i < count; ++i) {
      t.blobs.push_back({rng.uniform_int(0, size - 1), rng.uniform_int(0, size - 1), rng.uniform_int(3, 7)});
    }
  }
  return t;
}

float pattern_value(const TextureParams& t, int y, int x) {
  if (t.family == "checkerboard") {
    const int cy = (y + t.phase_y) / t.period;
    const int cx = (x + t.phase_x) / t.period;
    return ((cy + cx) % 2 == 0) ? 1.f : -1.f;
  }
  if (t.family == "stripes") {
    const int v = t.vertical ? x + t.phase_x : y + t.phase_y;
    return std::sin(6.2831853f * static_cast<float>(v) / static_cast<float>(t.period));
  }
  // blobs: sparse bright disks on a slightly dark ground
  for (const auto& b : t.blobs) {
    const int dy = y - b[0], dx = x - b[1];
    if (dy * dy + dx * dx <= b[2] * b[2]) return 1.f;
  }
  return -0.3f;
}

ImageF render_clean(const SynthSpec& spec, std::uint64_t image_seed) {
  Rng rng(image_seed);
  const int n = spec.image_size;
  TextureParams tex = draw_texture(spec.texture, n, rng);
  ImageF img(n, n);
  for (int y = 0; y < n; ++y) {
    const float tint_y = kTintRange * (static_cast<float>(y) / static_cast<float>(n - 1) - 0.5f);
    for (int x = 0; x < n; ++x) {
      const float tint_x = kTintRange * (static_cast<float>(x) / static_cast<float>(n - 1) - 0.5f);
      const float lum = kBase + kPatternAmp * pattern_value(tex, y, x);
      img.at(y, x, 0) = lum + tint_x + static_cast<float>(rng.normal(0.0, kNoiseSigma));
      img.at(y, x, 1) = lum + static_cast<float>(rng.normal(0.0, kNoiseSigma));
      img.at(y, x, 2) = lum + tint_y + static_cast<float>(rng.normal(0.0, kNoiseSigma));
    }
  }
  for (auto& v : img.rgb) v = std::clamp(v, 0.02f, 0.98f);
  return img;
}

// Guarantees the invariant "defective pixels differ from the clean render
// exactly inside the mask": clamping may cancel a shift, so coinciding
// pixels get nudged on the red channel.
void enforce_difference(ImageF& img, const ImageF& clean, const MaskU8& mask) {
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      if (!mask.at(y, x)) continue;
      bool differs = false;
      for (int c = 0; c < 3; ++c) differs = differs || img.at(y, x, c) != clean.at(y, x, c);
      if (!differs) {
        float& r = img.at(y, x, 0);
        r = r > 0.5f ? r - 0.3f : r + 0.3f;
      }
    }
  }
}

void apply_square(ImageF& img, MaskU8& mask, const SynthSpec& spec, Rng& rng) {
  const int side = rng.uniform_int(spec.defect_min, spec.defect_max);
  const int top = rng.uniform_int(0, img.h - side);
  const int left = rng.uniform_int(0, img.w - side);
  for (int y = top; y < top + side; ++y) {
    for (int x = left; x < left + side; ++x) {
      mask.at(y, x) = 1;
      // 4 px checker with opposite tint signs: no normal patch oscillates
      // its color channels at this frequency.
      const float sgn = (((y / 4) + (x / 4)) % 2 == 0) ? 1.f : -1.f;
      img.at(y, x, 0) = std::clamp(0.5f + sgn * 0.33f, 0.02f, 0.98f);
      img.at(y, x, 1) = std::clamp(0.5f + sgn * 0.12f, 0.02f, 0.98f);
      img.at(y, x, 2) = std::clamp(0.5f - sgn * 0.33f, 0.02f, 0.98f);
    }
  }
}

void apply_scratch(ImageF& img, MaskU8& mask, const SynthSpec& spec, Rng& rng) {
  const int len = rng.uniform_int(spec.defect_max, std::min(2 * spec.defect_max, img.w - 2));
  const int thick = rng.uniform_int(3, 5);
  const double angle = rng.uniform(0.0, 3.14159265);
  const int cy = rng.uniform_int(len / 2, img.h - 1 - len / 2);
  const int cx = rng.uniform_int(len / 2, img.w - 1 - len / 2);
  const double dy = std::sin(angle), dx = std::cos(angle);
  for (int s = -len / 2; s <= len / 2; ++s) {
    const int py = cy + static_cast<int>(std::lround(s * dy));
    const int px = cx + static_cast<int>(std::lround(s * dx));
    for (int oy = -thick / 2; oy <= thick / 2; ++oy) {
      for (int ox = -thick / 2; ox <= thick / 2; ++ox) {
        const int y = py + oy, x = px + ox;
        if (y < 0 || y >= img.h || x < 0 || x >= img.w) continue;
        mask.at(y, x) = 1;
        img.at(y, x, 0) = 0.06f;
        img.at(y, x, 1) = 0.45f;
        img.at(y, x, 2) = 0.88f;
      }
    }
  }
}

void apply_blotch(ImageF& img, MaskU8& mask, const SynthSpec& spec, Rng& rng) {
  const int radius = rng.uniform_int(std::max(4, spec.defect_min / 2), std::max(5, spec.defect_max / 2));
  const int cy = rng.uniform_int(radius, img.h - 1 - radius);
  const int cx = rng.uniform_int(radius, img.w - 1 - radius);
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      const int dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx > radius * radius) continue;
      mask.at(y, x) = 1;
      img.at(y, x, 0) = std::clamp(img.at(y, x, 0) + 0.24f, 0.02f, 0.98f);
      img.at(y, x, 1) = std::clamp(img.at(y, x, 1) + 0.05f, 0.02f, 0.98f);
      img.at(y, x, 2) = std::clamp(img.at(y, x, 2) - 0.22f, 0.02f, 0.98f);
    }
  }
}

constexpr std::uint64_t kTrainTag = 0x7261696eull;
constexpr std::uint64_t kTestTag = 0x74657374ull;
constexpr std::uint64_t kDefectTag = 0x64656663ull;

const char* kDefectFamilies[3] = {"square", "scratch", "blotch"};

}  // namespace

ImageF synthetic_clean_test_image(const SynthSpec& spec, std::uint64_t seed, int test_index) {
  spec.validate();
  return render_clean(spec, mix_seed(seed, kTestTag, static_cast<std::uint64_t>(test_index)));
}

SampleSet generate_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  SampleSet set;
  for (int i = 0; i < spec.n_train; ++i) {
    Sample s;
    s.image = render_clean(spec, mix_seed(seed, kTrainTag, static_cast<std::uint64_t>(i)));
    s.label = 0;
    s.category = "synthetic_" + spec.texture;
    s.split = "train";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "train_%03d", i);
    s.name = buf;
    s.defect_type = "good";
    set.train.push_back(std::move(s));
  }
  const int n_normal = spec.n_test / 2;
  for (int i = 0; i < spec.n_test; ++i) {
    Sample s;
    s.image = render_clean(spec, mix_seed(seed, kTestTag, static_cast<std::uint64_t>(i)));
    s.category = "synthetic_" + spec.texture;
    s.split = "test";
    if (i < n_normal) {
      s.label = 0;
      s.defect_type = "good";
      char buf[32];
      std::snprintf(buf, sizeof(buf), "test_norm_%03d", i);
      s.name = buf;
    } else {
      s.label = 1;
      s.has_mask = true;
      s.mask = MaskU8(s.image.h, s.image.w);
      const ImageF clean = s.image;
      Rng rng(mix_seed(seed, kDefectTag, static_cast<std::uint64_t>(i)));
      const char* family = kDefectFamilies[(i - n_normal) % 3];
      if (family == kDefectFamilies[0]) {
        apply_square(s.image, s.mask, spec, rng);
      } else if (family == kDefectFamilies[1]) {
        apply_scratch(s.image, s.mask, spec, rng);
      } else {
        apply_blotch(s.image, s.mask, spec, rng);
      }
      enforce_difference(s.image, clean, s.mask);
      s.defect_type = family;
      char buf[48];
      std::snprintf(buf, sizeof(buf), "test_def_%03d_%s", i, family);
      s.name = buf;
    }
    set.test.push_back(std::move(s));
  }
  return set;
}

namespace {

std::vector<fs::path> sorted_images(const fs::path& dir) {
  static const std::set<std::string> kExts{".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (kExts.count(ext)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SampleSet load_mvtec_category(const std::string& root, const std::string& category, int resize_to) {
  const fs::path base = fs::path(root) / category;
  const fs::path train_good = base / "train" / "good";
  const fs::path test_dir = base / "test";
  if (!fs::is_directory(train_good) || !fs::is_directory(test_dir)) {
    throw IoError("unknown dataset layout under " + base.string() + " (expected train/good and test/<type>)");
  }

  SampleSet set;
  for (const auto& p : sorted_images(train_good)) {
    Sample s;
    s.image = load_image_rgb(p.string(), resize_to);
    s.label = 0;
    s.category = category;
    s.split = "train";
    s.name = p.stem().string();
    s.defect_type = "good";
    set.train.push_back(std::move(s));
  }

  std::vector<fs::path> type_dirs;
  for (const auto& e : fs::directory_iterator(test_dir)) {
    if (e.is_directory()) type_dirs.push_back(e.path());
  }
  std::sort(type_dirs.begin(), type_dirs.end());
  for (const auto& td : type_dirs) {
    const std::string type = td.filename().string();
    for (const auto& p : sorted_images(td)) {
      Sample s;
      s.image = load_image_rgb(p.string(), resize_to);
      s.category = category;
      s.split = "test";
      s.name = type + "/" + p.stem().string();
      s.defect_type = type;
      if (type == "good") {
        s.label = 0;
      } else {
        s.label = 1;
        const fs::path mask_path = base / "ground_truth" / type / (p.stem().string() + "_mask.png");
        if (!fs::exists(mask_path)) {
          throw IoError("missing ground-truth mask for defective test image: " + mask_path.string());
        }
        s.mask = load_mask(mask_path.string(), resize_to);
        s.has_mask = true;
      }
      set.test.push_back(std::move(s));
    }
  }
  return set;
}

std::vector<std::string> list_mvtec_categories(const std::string& root) {
  std::vector<std::string> out;
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::is_directory(e.path() / "train" / "good")) {
      out.push_back(e.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_mvtec_layout(const SampleSet& set, const std::string& out_dir, const std::string& defect_dir) {
  const fs::path base(out_dir);
  fs::create_directories(base / "train" / "good");
  fs::create_directories(base / "test" / "good");
  fs::create_directories(base / "test" / defect_dir);
  fs::create_directories(base / "ground_truth" / defect_dir);
  for (const auto& s : set.train) {
    save_image_rgb(s.image, (base / "train" / "good" / (s.name + ".png")).string());
  }
  for (const auto& s : set.test) {
    if (s.label == 0) {
      save_image_rgb(s.image, (base / "test" / "good" / (s.name + ".png")).string());
    } else {
      save_image_rgb(s.image, (base / "test" / defect_dir / (s.name + ".png")).string());
      std::vector<std::uint8_t> gray(s.mask.v.size());
      for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = s.mask.v[i] ? 255 : 0;
      save_gray_png(gray, s.mask.h, s.mask.w, (base / "ground_truth" / defect_dir / (s.name + "_mask.png")).string());
    }
  }
}

}  // namespace sclvi::harness
