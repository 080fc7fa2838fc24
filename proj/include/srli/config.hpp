#pragma once

// Flat `dotted.key = value` configuration with typed reads and unknown-key
// detection.

#include "srli/core.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace srli {

// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw InvalidArgument("cannot format number");
  return std::string(buf, end);
}

class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  explicit KeyValueConfig(std::map<std::string, std::string> kv, std::string source = "<config>")
      : kv_(std::move(kv)), source_(std::move(source)) {}

  static KeyValueConfig parse(std::istream& in, const std::string& source) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw IoError(source, "line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw IoError(source, "line " + std::to_string(lineno) + ": empty key");
      kv[key] = trim(line.substr(eq + 1));
    }
    return KeyValueConfig(std::move(kv), source);
  }

  static KeyValueConfig parse_text(const std::string& text, const std::string& source = "<text>") {
    std::istringstream in(text);
    return parse(in, source);
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open config file");
    return parse(in, path);
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  const std::map<std::string, std::string>& values() const { return kv_; }
  const std::string& source() const { return source_; }

  // Reads `key` into `out` when present; leaves `out` untouched otherwise.
  template <class T>
  bool read(const std::string& key, T& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return false;
    used_.insert(key);
    try {
      out = convert<T>(it->second);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(source_ + ": " + key + ": " + e.what());
    }
    return true;
  }

  template <class T, class F>
  bool read_with(const std::string& key, T& out, F&& parse_fn) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return false;
    used_.insert(key);
    try {
      out = parse_fn(it->second);
    } catch (const std::exception& e) {
      throw InvalidArgument(source_ + ": " + key + ": " + e.what());
    }
    return true;
  }

  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  void reject_unused() const {
    const auto u = unused();
    if (!u.empty()) throw InvalidArgument(source_ + ": unknown key '" + u.front() + "'");
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
  }

  template <class T>
  static T convert(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw InvalidArgument("expected a boolean, got '" + s + "'");
    } else if constexpr (std::is_arithmetic_v<T>) {
      T v{};
      const char* b = s.data();
      const char* e = s.data() + s.size();
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) throw InvalidArgument("expected a number, got '" + s + "'");
      return v;
    } else {
      // Fixed-size arrays and vectors as comma-separated lists.
      const auto parts = split(s, ',');
      T out{};
      if constexpr (requires { out.resize(0); }) {
        out.resize(parts.size());
      } else if (parts.size() != out.size()) {
        throw InvalidArgument("expected " + std::to_string(out.size()) + " comma-separated values");
      }
      for (std::size_t i = 0; i < parts.size(); ++i) out[i] = convert<typename T::value_type>(parts[i]);
      return out;
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
  std::string source_ = "<config>";
};

// Accumulates `key = value` lines in insertion order.
class ConfigWriter {
 public:
  void put(const std::string& key, const std::string& v) { out_ << key << " = " << v << '\n'; }
  void put(const std::string& key, double v) { put(key, format_double(v)); }
  void put(const std::string& key, bool v) { put(key, std::string(v ? "true" : "false")); }
  template <class I, std::enable_if_t<std::is_integral_v<I> && !std::is_same_v<I, bool>, int> = 0>
  void put(const std::string& key, I v) { put(key, std::to_string(v)); }
  template <class C>
  void put_list(const std::string& key, const C& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format_double(values[i]);
    put(key, s);
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

}  // namespace srli
