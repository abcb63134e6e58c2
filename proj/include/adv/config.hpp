#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace adv::cli {

// key=value experiment configuration. UTF-8 lines, '#' comments, unknown
// keys rejected against a per-command key list.
class Config {
 public:
  static Config parse_file(const std::filesystem::path& path);
  static Config parse_text(const std::string& text);

  void validate_keys(std::span<const char* const> allowed) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  // Sorted key=value lines preceded by a tool version comment.
  std::string resolved_text() const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& csv, char sep = ',');

// Creates the run directory. An existing non-empty directory is rejected
// unless overwrite is set.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

}  // namespace adv::cli
