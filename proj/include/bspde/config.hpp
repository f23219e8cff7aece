#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bspde {

/// One `[experiment <id>]` block of an INI-style config file.
class ConfigSection {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  ConfigSection() = default;
  ConfigSection(std::string id, std::string source, int line) : id_(std::move(id)), source_(std::move(source)), line_(line) {}

  const std::string& id() const noexcept { return id_; }
  int line() const noexcept { return line_; }
  const std::string& source() const noexcept { return source_; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  /// Adds a key; throws ConfigError on a duplicate.
  void set(const std::string& key, const std::string& value, int line);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string require_string(const std::string& key) const;
  double require_double(const std::string& key) const;
  long long require_int(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::optional<double> optional_double(const std::string& key) const;

  /// ConfigError naming the file, line and key.
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;
  /// Rejects keys that no getter has read.
  void reject_unused() const;

  /// FNV-1a over the canonical form: keys sorted, whitespace trimmed, numeric
  /// tokens rewritten in shortest round-trip form.
  std::uint64_t hash() const;

 private:
  const Entry& entry(const std::string& key) const;

  std::string id_;
  std::string source_;
  int line_ = 0;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

struct Config {
  std::vector<ConfigSection> experiments;
};

/// Parses `[experiment <id>]` sections of `key = value` lines; `#` and `;`
/// start comments. Every error carries `source:line`.
Config parse_config(const std::string& text, const std::string& source = "<config>");
Config load_config(const std::string& path);

/// Canonical rendering of a value used by the hash.
std::string canonical_value(const std::string& value);
std::string hash_hex(std::uint64_t h);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
/// Strict number parsing; std::nullopt unless the whole token is a finite number.
std::optional<double> parse_number(const std::string& token);

}  // namespace bspde
