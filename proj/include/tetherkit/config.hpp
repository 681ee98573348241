#pragma once

// Flat key = value run configuration. '#' starts a comment; vectors are
// written as comma-separated triples ("1, -1, 4").

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tetherkit/types.hpp"

namespace tetherkit {

class Config {
 public:
  /// Throws ConfigError on malformed lines, duplicate or unknown keys.
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  /// Canonical text: sorted keys, one per line.
  std::string dump() const;
  /// FNV-1a 64 of dump().
  std::uint64_t hash() const;
  std::string hash_hex() const;

  const std::map<std::string, std::string>& values() const { return values_; }

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace tetherkit
