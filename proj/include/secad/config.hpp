// Key-value config tree: `[section]` headers over `key = value` lines,
// with `#` comments. Values stay raw strings; typed access validates on
// read. Flat "section.key" views feed provenance hashing.
#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace secad {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class KvConfig {
 public:
  KvConfig() = default;

  // Throws ConfigError on malformed lines or duplicate keys.
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& p);

  bool has(const std::string& section, const std::string& key) const;

  // Each getter returns the fallback when the key is absent and throws
  // ConfigError when the stored value does not convert.
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback = {}) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  int get_int(const std::string& section, const std::string& key,
              int fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;

  // "section.key" -> raw value, deterministically ordered.
  std::map<std::string, std::string> flat() const;

 private:
  const std::string* find(const std::string& section,
                          const std::string& key) const;

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace secad
