#pragma once

// Flat key=value experiment configuration with section-prefixed keys
// (e.g. ppo.gamma=0.99). Defaults are materialized into every saved manifest,
// so a manifest is itself a complete, re-runnable config.

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpol/io.hpp"

namespace advpol {

class Config {
 public:
  static Config parse_string(const std::string& text, const std::string& source) {
    Config cfg;
    int line_no = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      const size_t eq = trimmed.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw std::runtime_error(source + ":" + std::to_string(line_no) +
                                 ": expected key=value, got '" + trimmed + "'");
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      cfg.entries_[key] = value;
    }
    return cfg;
  }

  static Config parse_file(const std::filesystem::path& path) {
    return parse_string(read_text_file(path), path.string());
  }

  void apply_override(const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::runtime_error("override '" + kv + "' is not key=value");
    }
    entries_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  const std::string& get_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      throw std::runtime_error("missing required config key '" + key + "'");
    }
    return it->second;
  }

  std::int64_t get_int(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      size_t pos = 0;
      const std::int64_t out = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (...) {
      throw std::runtime_error("config key '" + key + "': '" + v + "' is not an integer");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      size_t pos = 0;
      const std::uint64_t out = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (...) {
      throw std::runtime_error("config key '" + key + "': '" + v + "' is not an integer");
    }
  }

  double get_real(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (...) {
      throw std::runtime_error("config key '" + key + "': '" + v + "' is not a number");
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config key '" + key + "': '" + v + "' is not a boolean");
  }

  std::vector<int> get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::istringstream in(get_string(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      const std::string t = trim(item);
      if (t.empty()) continue;
      out.push_back(static_cast<int>(std::stoll(t)));
    }
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get_string(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Overlay this config onto a defaults map; keys absent from the defaults
  // registry are rejected as typos.
  Config materialize(const std::map<std::string, std::string>& defaults) const {
    Config out;
    out.entries_ = defaults;
    for (const auto& [k, v] : entries_) {
      if (!defaults.count(k)) {
        throw std::runtime_error("unknown config key '" + k + "'");
      }
      out.entries_[k] = v;
    }
    return out;
  }

  // Sorted, diff-friendly; parseable as a config again.
  std::string manifest_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
      out += k;
      out += '=';
      out += v;
      out += '\n';
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> entries_;
};

}  // namespace advpol
