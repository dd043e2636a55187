#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stnscm {

// Flat `key = value` configuration. Lines starting with '#' are comments.
// Only keys listed in `Config::schema()` are accepted.
class Config {
 public:
  struct KeyInfo {
    std::string key;
    std::string default_value;
    std::string help;
  };

  static const std::vector<KeyInfo>& schema();
  static Config from_file(const std::filesystem::path& path);
  static Config from_text(const std::string& text, const std::string& source = "<memory>");

  void set(const std::string& key, const std::string& value);
  // "key=value" form, used for command-line overrides.
  void set_assignment(const std::string& assignment);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  // Every schema key with its effective value, in schema order.
  std::string echo() const;
  const std::map<std::string, std::string>& explicit_values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stnscm
