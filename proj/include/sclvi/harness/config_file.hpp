#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sclvi/core/error.hpp"

namespace sclvi::harness {

// Flat key-value config with [section] headers; keys are stored as
// "section.key". '#' and ';' start comments.
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // FNV-1a over the canonical "key=value" lines (sorted); embedded in
  // reports for provenance.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace sclvi::harness
