#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stdml {

/// Flat key=value configuration. Later assignments override earlier ones;
/// '#' starts a comment line.
class RunConfig {
 public:
  void load(std::istream& in, const std::string& source);
  void load_file(const std::string& path);
  /// Parses "key=value".
  void assign(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// ConfigError listing every key outside `known`.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  /// "# key=value" lines of the resolved configuration.
  std::string header_block() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stdml
