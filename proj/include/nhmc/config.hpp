#pragma once

// Flat `key = value` experiment configuration. Every getter records the value it
// resolved (including defaults), so the run can echo a complete config back.

#include "nhmc/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nhmc {

class Config {
 public:
  Config() = default;

  /// Lines of `key = value`; `#` starts a comment; blank lines ignored.
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  /// Later sets win, so apply the file first and command-line overrides after.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated reals.
  Vector get_vector(const std::string& key, const Vector& fallback) const;
  /// Comma-separated words.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  /// Keys that were set but never read: almost always a typo.
  std::vector<std::string> unused_keys() const;
  /// Throws ConfigError naming any unused key.
  void require_all_used() const;

  /// Every resolved key in sorted order, in the same `key = value` syntax.
  std::string resolved_text() const;

 private:
  const std::string* raw(const std::string& key) const;
  void record(const std::string& key, std::string value) const;

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);
std::string format_vector(const Vector& v);

}  // namespace nhmc
