#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abcsmooth {

/// Flat `section.key = value` configuration. Lines starting with '#' are comments.
/// Later assignments override earlier ones. Accessors throw ConfigError on malformed
/// values.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& is, std::string_view origin = "<stream>");
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::string& path);

  void set(std::string key, std::string value);
  /// Copies every key of `other` over this one.
  void merge(const KeyValueConfig& other);

  [[nodiscard]] bool has(std::string_view key) const;
  [[nodiscard]] std::optional<std::string> get(std::string_view key) const;

  [[nodiscard]] std::string get_string(std::string_view key, std::string fallback) const;
  [[nodiscard]] double get_double(std::string_view key, double fallback) const;
  [[nodiscard]] std::size_t get_size(std::string_view key, std::size_t fallback) const;
  [[nodiscard]] std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  [[nodiscard]] bool get_bool(std::string_view key, bool fallback) const;
  [[nodiscard]] std::vector<double> get_doubles(std::string_view key,
                                                std::vector<double> fallback) const;
  [[nodiscard]] std::vector<std::size_t> get_sizes(std::string_view key,
                                                   std::vector<std::size_t> fallback) const;
  [[nodiscard]] std::vector<std::string> get_strings(std::string_view key,
                                                     std::vector<std::string> fallback) const;

  [[nodiscard]] const std::map<std::string, std::string, std::less<>>& entries() const {
    return entries_;
  }

  void write(std::ostream& os) const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

/// Parses "a,b,c" and the range form "lo:step:hi" (inclusive) into numbers.
std::vector<double> parse_number_list(std::string_view text);

}  // namespace abcsmooth
