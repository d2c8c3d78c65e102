#pragma once
// Flat sectioned key=value configuration:
//
//   [env]
//   kind = two-cycle      # full-line and trailing comments allowed
//
// Consumers read through ConfigReader, which records every key it was
// asked about; finish() then rejects any key the run never consumed, so
// misspelled keys fail loudly instead of silently using defaults.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "volrl/common.hpp"

namespace volrl {

struct ConfigEntry {
  std::string value;
  int line = 0;
};

struct ConfigFile {
  std::map<std::string, std::map<std::string, ConfigEntry>> sections;
  std::string raw;  // exact file bytes, hashed into output metadata
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline ConfigFile parse_config_text(const std::string& text) {
  ConfigFile cfg;
  cfg.raw = text;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', "config line " + std::to_string(line_no) +
                                      ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      require(!section.empty(), "config line " + std::to_string(line_no) +
                                    ": empty section name");
      continue;
    }
    size_t eq = line.find('=');
    require(eq != std::string::npos, "config line " +
                                         std::to_string(line_no) +
                                         ": expected key = value");
    require(!section.empty(), "config line " + std::to_string(line_no) +
                                  ": key outside any [section]");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    require(!key.empty(), "config line " + std::to_string(line_no) +
                              ": empty key");
    require(cfg.sections[section].find(key) == cfg.sections[section].end(),
            "config line " + std::to_string(line_no) + ": duplicate key " +
                section + "." + key);
    cfg.sections[section][key] = ConfigEntry{value, line_no};
  }
  return cfg;
}

inline ConfigFile parse_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/** FNV-1a over the raw config bytes, printed as 16 hex digits. Stamped
 *  into every output CSV's metadata line. */
inline std::string config_hash(const ConfigFile& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : cfg.raw) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

class ConfigReader {
 public:
  explicit ConfigReader(ConfigFile cfg) : cfg_(std::move(cfg)) {}

  const ConfigFile& file() const { return cfg_; }

  bool has(const std::string& section, const std::string& key) {
    mark(section, key);
    auto s = cfg_.sections.find(section);
    return s != cfg_.sections.end() && s->second.count(key) > 0;
  }

  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) {
    mark(section, key);
    auto s = cfg_.sections.find(section);
    if (s == cfg_.sections.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second.value;
  }

  Real get_real(const std::string& section, const std::string& key,
                Real fallback) {
    return parse<Real>(section, key, fallback);
  }
  int get_int(const std::string& section, const std::string& key,
              int fallback) {
    return parse<int>(section, key, fallback);
  }
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) {
    return parse<std::uint64_t>(section, key, fallback);
  }
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) {
    std::string v = get_str(section, key, fallback ? "true" : "false");
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config: " + section + "." + key +
                          " expects true/false");
  }

  /** Comma-separated list of reals. */
  std::vector<Real> get_real_list(const std::string& section,
                                  const std::string& key) {
    std::string v = get_str(section, key, "");
    std::vector<Real> out;
    if (v.empty()) return out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      require(!item.empty(),
              "config: empty element in list " + section + "." + key);
      out.push_back(to_value<Real>(section, key, item));
    }
    return out;
  }

  /** Rejects any key present in the file that no consumer asked about. */
  void finish() const {
    for (const auto& [section, keys] : cfg_.sections)
      for (const auto& [key, entry] : keys)
        if (!used_.count(section + "." + key))
          throw ValidationError("config line " + std::to_string(entry.line) +
                                ": unknown key " + section + "." + key);
  }

 private:
  template <class T>
  T parse(const std::string& section, const std::string& key, T fallback) {
    mark(section, key);
    auto s = cfg_.sections.find(section);
    if (s == cfg_.sections.end()) return fallback;
    auto k = s->second.find(key);
    if (k == s->second.end()) return fallback;
    return to_value<T>(section, key, k->second.value);
  }

  template <class T>
  T to_value(const std::string& section, const std::string& key,
             const std::string& text) {
    std::istringstream ss(text);
    T out;
    ss >> out;
    if (ss.fail() || !(ss >> std::ws).eof())
      throw ValidationError("config: bad value for " + section + "." + key +
                            ": '" + text + "'");
    return out;
  }

  void mark(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
  }

  ConfigFile cfg_;
  std::set<std::string> used_;
};

}  // namespace volrl
