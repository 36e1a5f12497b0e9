#include "sclvi/encoder/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

namespace sclvi::encoder {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'L', 'V', 'I', 'C', 'K', 'P'};

using json = nlohmann::json;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

json pretext_to_json(const pretext::PretextConfig& p) {
  return json{{"patch_size", p.patch_size},
              {"jitter_max", p.jitter_max},
              {"gray_shift_max", p.gray_shift_max},
              {"grid_gap", p.grid_gap}};
}

pretext::PretextConfig pretext_from_json(const json& j) {
  pretext::PretextConfig p;
  p.patch_size = j.at("patch_size");
  p.jitter_max = j.at("jitter_max");
  p.gray_shift_max = j.at("gray_shift_max");
  p.grid_gap = j.at("grid_gap");
  return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelF& model, const pretext::PretextConfig& pcfg_small,
                     const pretext::PretextConfig& pcfg_large) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);

  const auto& cfg = model.config();
  const auto& d = model.dims();
  json header{
      {"encoder", {{"norm_groups", cfg.norm_groups}, {"activation", cfg.activation}, {"init_seed", cfg.init_seed}}},
      {"dims",
       {{"c1", d.c1},
        {"c2", d.c2},
        {"c3", d.c3},
        {"c4", d.c4},
        {"c5", d.c5},
        {"c6", d.c6},
        {"embed", d.embed},
        {"sec_c1", d.sec_c1},
        {"head_hidden", d.head_hidden}}},
      {"pretext_small", pretext_to_json(pcfg_small)},
      {"pretext_large", pretext_to_json(pcfg_large)},
  };
  const std::string hs = header.dump();
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.params().size()));
  for (const auto* p : model.params()) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p->shape.size()));
    for (int dsz : p->shape) write_pod<std::int32_t>(os, dsz);
    write_pod<std::uint64_t>(os, p->w.size());
    os.write(reinterpret_cast<const char*>(p->w.data()), static_cast<std::streamsize>(p->w.size() * sizeof(float)));
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

ModelF load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw IoError("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto hlen = read_pod<std::uint32_t>(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw IoError("checkpoint: truncated header");
  const json header = json::parse(hs);

  EncoderConfig cfg;
  cfg.norm_groups = header.at("encoder").at("norm_groups");
  cfg.activation = header.at("encoder").at("activation");
  cfg.init_seed = header.at("encoder").at("init_seed");
  EncoderDims d;
  const auto& jd = header.at("dims");
  d.c1 = jd.at("c1");
  d.c2 = jd.at("c2");
  d.c3 = jd.at("c3");
  d.c4 = jd.at("c4");
  d.c5 = jd.at("c5");
  d.c6 = jd.at("c6");
  d.embed = jd.at("embed");
  d.sec_c1 = jd.at("sec_c1");
  d.head_hidden = jd.at("head_hidden");

  ModelF model(cfg, d);
  const auto count = read_pod<std::uint32_t>(is);
  if (count != model.params().size()) {
    throw IoError("checkpoint: parameter count mismatch (file " + std::to_string(count) + ", model " +
                  std::to_string(model.params().size()) + ")");
  }
  for (auto* p : model.params_mutable()) {
    const auto nlen = read_pod<std::uint32_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const auto nd = read_pod<std::uint32_t>(is);
    std::vector<int> shape(nd);
    for (auto& dsz : shape) dsz = read_pod<std::int32_t>(is);
    const auto n = read_pod<std::uint64_t>(is);
    if (name != p->name || shape != p->shape || n != p->w.size()) {
      throw IoError("checkpoint: manifest mismatch at '" + name + "' (expected '" + p->name + "')");
    }
    is.read(reinterpret_cast<char*>(p->w.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw IoError("checkpoint: truncated weights at '" + name + "'");
  }
  if (meta_out) {
    meta_out->format_version = static_cast<int>(version);
    meta_out->encoder = cfg;
    meta_out->dims = d;
    meta_out->pretext_small = pretext_from_json(header.at("pretext_small"));
    meta_out->pretext_large = pretext_from_json(header.at("pretext_large"));
  }
  return model;
}

}  // namespace sclvi::encoder
