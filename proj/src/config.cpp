#include "adv/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "adv/io.hpp"
#include "adv/version.hpp"

namespace adv::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key=value, got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    if (cfg.values_.count(key))
      throw std::runtime_error("config: duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::filesystem::path& path) {
  return parse_text(io::read_text_file(path));
}

void Config::validate_keys(std::span<const char* const> allowed) const {
  for (const auto& [key, value] : values_) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw std::runtime_error("config: unknown key '" + key + "'");
  }
}

std::string Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
  return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not a number: " + it->second);
  }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "1" || it->second == "true") return true;
  if (it->second == "0" || it->second == "false") return false;
  throw std::runtime_error("config: key '" + key + "' is not a boolean: " + it->second);
}

std::string Config::resolved_text() const {
  std::ostringstream os;
  os << "# " << kToolName << " " << kToolVersion << "\n";
  for (const auto& [key, value] : values_) os << key << "=" << value << "\n";
  return os.str();
}

std::vector<std::string> split_list(const std::string& csv, char sep) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream is(csv);
  while (std::getline(is, token, sep))
    if (!token.empty()) out.push_back(token);
  return out;
}

void prepare_output_dir(const std::filesystem::path& dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir))
      throw std::runtime_error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !overwrite)
      throw std::runtime_error("output directory " + dir.string() +
                               " is not empty (set overwrite=1 to replace)");
  } else {
    fs::create_directories(dir);
  }
}

}  // namespace adv::cli
