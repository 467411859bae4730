#pragma once

// Plain-text config files for the CLI: one "section.key = value" per line,
// '#' comments, blank lines ignored. Values from the file fill any setting
// the user did not pass as a flag; flags always win. Unknown keys are an
// error, not a warning, so typos cannot silently fall back to defaults.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdd/common.hpp"

namespace qdd {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// Parsed file: insertion-ordered (key, value) pairs. Duplicate keys keep
// the last occurrence, like most ini dialects.
inline std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                            const std::string& origin) {
  std::map<std::string, std::string> entries;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line =
        text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail("invalid-config",
           origin + ":" + std::to_string(line_no) + ": expected 'section.key = value'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || key.find('.') == std::string::npos)
      fail("invalid-config",
           origin + ":" + std::to_string(line_no) + ": key '" + key + "' needs a section prefix");
    if (value.empty())
      fail("invalid-config", origin + ":" + std::to_string(line_no) + ": empty value for '" +
                                 key + "'");
    entries[key] = value;
  }
  return entries;
}

// One settable config entry: a key, whether the user already pinned it on
// the command line, and a setter that parses the file's string.
struct ConfigBinding {
  std::string key;
  std::function<bool()> flag_given;                // true: the flag wins, skip the file value
  std::function<void(const std::string&)> apply;   // parse + store; throws Error on bad values
  std::function<std::string()> render;             // current value, for the resolved-config echo
};

// Merge file entries into bindings. Every file key must match a binding.
inline void apply_config_entries(const std::map<std::string, std::string>& entries,
                                 std::vector<ConfigBinding>& bindings,
                                 const std::string& origin) {
  for (const auto& [key, value] : entries) {
    ConfigBinding* hit = nullptr;
    for (auto& b : bindings)
      if (b.key == key) {
        hit = &b;
        break;
      }
    if (!hit) fail("invalid-config", origin + ": unknown key '" + key + "'");
    if (hit->flag_given()) continue;
    try {
      hit->apply(value);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail("invalid-config", origin + ": bad value '" + value + "' for key '" + key + "'");
    }
  }
}

// Helpers for the common scalar kinds; throw std::exception on junk so
// apply_config_entries can wrap it with the key name.
inline double config_double(const std::string& s) {
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing junk");
  return v;
}

inline long long config_int(const std::string& s) {
  std::size_t used = 0;
  long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing junk");
  return v;
}

inline std::uint64_t config_u64(const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing junk");
  return static_cast<std::uint64_t>(v);
}

}  // namespace qdd
