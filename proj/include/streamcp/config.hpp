#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

// Experiment manifests: a flat "key = value" text file ('#' comments, blank
// lines allowed) with typed accessors. Command-line overrides are applied on
// top via set(), so flags always win.

namespace streamcp {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::size_t> get_size_list(
      const std::string& key, const std::vector<std::size_t>& fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace streamcp
