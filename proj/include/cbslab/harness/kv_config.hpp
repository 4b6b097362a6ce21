#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cbslab::harness {

/// Flat `key = value` config file: one pair per line, `#` comments,
/// comma-separated lists. Keys keep insertion order for serialization.
class KeyValueConfig {
 public:
  static KeyValueConfig from_string(const std::string& text);
  static KeyValueConfig from_file(const std::string& path);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, std::int64_t value);

  std::string serialize() const;
  void save(const std::string& path) const;

  /// Canonical text (keys sorted) used for stable hashing.
  std::string canonical() const;

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  const std::string* find(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// 64-bit FNV-1a of a canonical string, hex-encoded; stable across runs
/// and re-serialization.
std::string stable_hash(const std::string& canonical_text);

}  // namespace cbslab::harness
