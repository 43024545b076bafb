#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace panelnet {

// Flat `key=value` text: one pair per line, `#` starts a comment, blank
// lines ignored. Typed getters record which keys were read so leftovers can
// be reported as unknown.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  // Throws ConfigError naming every key no getter asked for.
  void reject_unknown() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace panelnet
