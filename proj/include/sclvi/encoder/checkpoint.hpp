#pragma once

#include <string>

#include "sclvi/encoder/model.hpp"
#include "sclvi/pretext/sample.hpp"

namespace sclvi::encoder {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int format_version = kCheckpointVersion;
  EncoderConfig encoder;
  EncoderDims dims;
  pretext::PretextConfig pretext_small, pretext_large;
};

// Single binary archive: magic, format version, JSON config header, then
// the named weight manifest with raw float32 data (little-endian).
void save_checkpoint(const std::string& path, const ModelF& model, const pretext::PretextConfig& pcfg_small,
                     const pretext::PretextConfig& pcfg_large);

ModelF load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

}  // namespace sclvi::encoder
