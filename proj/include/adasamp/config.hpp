#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "adasamp/error.hpp"

namespace adasamp {

/// Flat `key = value` file with dotted section prefixes. `#` starts a
/// comment; blank lines are ignored; later keys override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw Fault("config line " + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key = trim(body.substr(0, eq));
      const std::string value = trim(body.substr(eq + 1));
      if (key.empty()) throw Fault("config line " + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.count(key)) cfg.order_.push_back(key);
      cfg.values_[key] = value;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  /// Keys in first-appearance order.
  const std::vector<std::string>& keys() const { return order_; }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw Fault("config is missing required key '" + key + "'");
    return *v;
  }

  std::optional<double> get_real(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    return to_real(key, *v);
  }

  double get_real(const std::string& key, double fallback) const {
    return get_real(key).value_or(fallback);
  }

  std::optional<std::uint64_t> get_unsigned(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size() || v->empty())
      throw Fault("config key '" + key + "': expected a non-negative integer, got '" + *v + "'");
    return out;
  }

  std::uint64_t get_unsigned(const std::string& key, std::uint64_t fallback) const {
    return get_unsigned(key).value_or(fallback);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw Fault("config key '" + key + "': expected a boolean, got '" + *v + "'");
  }

  static double to_real(const std::string& key, std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
      throw Fault("config key '" + key + "': expected a number, got '" + std::string(v) + "'");
    return out;
  }

  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  /// Comma-separated list, each entry trimmed.
  static std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    while (true) {
      const auto comma = s.find(',');
      out.push_back(trim(s.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace adasamp
