#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trapdoor {

/// Plain `key = value` text, one pair per line, '#' comments. Repeated keys
/// are kept in order. Every accessor throws Error(ConfigError) on bad input.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, std::string origin = "<config>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;
  std::string require(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys in first-appearance order.
  const std::vector<std::string>& keys() const { return order_; }
  const std::string& origin() const { return origin_; }

  /// Rejects keys that are neither listed nor start with a listed prefix
  /// ending in '.'.
  void reject_unknown(const std::vector<std::string_view>& known) const;

 private:
  std::string origin_;
  std::map<std::string, std::vector<std::string>> values_;
  std::vector<std::string> order_;
};

}  // namespace trapdoor
