#include "secad/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "secad/io.hpp"

namespace secad {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig config;
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = trim(raw);
    if (const size_t hash = line.find('#'); hash != std::string_view::npos)
      line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key{trim(line.substr(0, eq))};
    std::string_view value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);

    auto [it, inserted] =
        config.sections_[section].emplace(key, std::string(value));
    if (!inserted)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
  }
  return config;
}

KvConfig KvConfig::load(const std::filesystem::path& p) {
  return parse(slurp_file(p));
}

const std::string* KvConfig::find(const std::string& section,
                                  const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string KvConfig::get_string(const std::string& section,
                                 const std::string& key,
                                 const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

double KvConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  try {
    size_t used = 0;
    const double parsed = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError(section + "." + key + ": '" + *v + "' is not a number");
  }
}

int KvConfig::get_int(const std::string& section, const std::string& key,
                      int fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  int parsed = 0;
  const auto [end, ec] =
      std::from_chars(v->data(), v->data() + v->size(), parsed);
  if (ec != std::errc{} || end != v->data() + v->size())
    throw ConfigError(section + "." + key + ": '" + *v +
                      "' is not an integer");
  return parsed;
}

bool KvConfig::get_bool(const std::string& section, const std::string& key,
                        bool fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw ConfigError(section + "." + key + ": '" + *v +
                    "' is not true or false");
}

std::map<std::string, std::string> KvConfig::flat() const {
  std::map<std::string, std::string> out;
  for (const auto& [section, keys] : sections_)
    for (const auto& [key, value] : keys)
      out[section.empty() ? key : section + "." + key] = value;
  return out;
}

}  // namespace secad
