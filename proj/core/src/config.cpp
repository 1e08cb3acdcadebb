#include "abcsmooth/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view text, std::string_view key) {
  const auto t = trim(text);
  try {
    std::size_t used = 0;
    const std::string s(t);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "': not a number: '" + std::string(t) + "'");
  }
}

std::uint64_t to_u64(std::string_view text, std::string_view key) {
  const auto t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + std::string(key) + "': not a non-negative integer: '" +
                      std::string(t) + "'");
  }
  return v;
}

}  // namespace

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  const auto t = trim(text);
  if (t.empty()) return out;
  for (const auto item : split(t, ',')) {
    if (item.find(':') != std::string_view::npos) {
      const auto parts = split(item, ':');
      if (parts.size() != 3) throw ConfigError("range must read lo:step:hi, got '" + std::string(item) + "'");
      const double lo = to_double(parts[0], "range");
      const double step = to_double(parts[1], "range");
      const double hi = to_double(parts[2], "range");
      if (!(step != 0.0) || (hi - lo) / step < 0.0) throw ConfigError("empty or infinite range");
      const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
      for (std::size_t k = 0; k < count; ++k) out.push_back(lo + step * static_cast<double>(k));
    } else {
      out.push_back(to_double(item, "list"));
    }
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::istream& is, std::string_view origin) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(t.substr(0, eq));
    auto value = trim(t.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string_view::npos) {
      value = trim(value.substr(0, hash));
    }
    if (key.empty()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.set(std::string(key), std::string(value));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse(is, "<string>");
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse(is, path);
}

void KeyValueConfig::set(std::string key, std::string value) {
  entries_[std::move(key)] = std::move(value);
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

bool KeyValueConfig::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> KeyValueConfig::get(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  const auto v = get(key);
  return v ? to_double(*v, key) : fallback;
}

std::size_t KeyValueConfig::get_size(std::string_view key, std::size_t fallback) const {
  const auto v = get(key);
  return v ? static_cast<std::size_t>(to_u64(*v, key)) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(std::string_view key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? to_u64(*v, key) : fallback;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': not a boolean: '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(std::string_view key,
                                                std::vector<double> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_number_list(*v);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what());
  }
}

std::vector<std::size_t> KeyValueConfig::get_sizes(std::string_view key,
                                                   std::vector<std::size_t> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  for (const double d : get_doubles(key, {})) {
    if (d < 0.0 || d != std::floor(d)) {
      throw ConfigError("config key '" + std::string(key) + "': expected non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(std::string_view key,
                                                     std::vector<std::string> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (const auto item : split(*v, ',')) {
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

void KeyValueConfig::write(std::ostream& os) const {
  for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
}

}  // namespace abcsmooth
