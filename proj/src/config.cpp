#include "nhmc/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nhmc {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': not a number: " + text);
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + key + "': not a non-negative integer: " + text);
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_vector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
    c.set(key, trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

const std::string* Config::raw(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void Config::record(const std::string& key, std::string value) const { resolved_[key] = std::move(value); }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = raw(key);
  std::string out = v ? *v : fallback;
  record(key, out);
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  const std::string* v = raw(key);
  const double out = v ? parse_double(key, *v) : fallback;
  record(key, format_double(out));
  return out;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const std::string* v = raw(key);
  const std::size_t out = v ? static_cast<std::size_t>(parse_u64(key, *v)) : fallback;
  record(key, std::to_string(out));
  return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = raw(key);
  const std::uint64_t out = v ? parse_u64(key, *v) : fallback;
  record(key, std::to_string(out));
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = raw(key);
  bool out = fallback;
  if (v) {
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "true" || s == "1" || s == "yes") {
      out = true;
    } else if (s == "false" || s == "0" || s == "no") {
      out = false;
    } else {
      throw ConfigError("key '" + key + "': not a boolean: " + *v);
    }
  }
  record(key, out ? "true" : "false");
  return out;
}

Vector Config::get_vector(const std::string& key, const Vector& fallback) const {
  const std::string* v = raw(key);
  Vector out = fallback;
  if (v) {
    const auto items = split_commas(*v);
    out.resize(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) out[static_cast<Eigen::Index>(i)] = parse_double(key, items[i]);
  }
  record(key, format_vector(out));
  return out;
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  const std::string* v = raw(key);
  std::vector<std::string> out = v ? split_commas(*v) : fallback;
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) text += (i ? "," : "") + out[i];
  record(key, text);
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (!resolved_.count(key)) out.push_back(key);
  }
  return out;
}

void Config::require_all_used() const {
  const auto unused = unused_keys();
  if (unused.empty()) return;
  std::string msg = "unknown config key(s):";
  for (const auto& k : unused) msg += " " + k;
  throw ConfigError(msg);
}

std::string Config::resolved_text() const {
  std::string out;
  for (const auto& [key, value] : resolved_) out += key + " = " + value + "\n";
  return out;
}

}  // namespace nhmc
