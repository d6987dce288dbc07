#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rddclust {

//! Flat `key = value` configuration with `#` comments and dotted section
//! prefixes (e.g. `dpmm.kappa0 = 5`). Values stay strings until a typed
//! getter is called; every getter marks its key as consumed so that
//! assert_all_consumed() can reject unknown keys.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  //! `key=value` (used by --set command-line overrides).
  void set_pair(const std::string& pair);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  //! Comma-separated list; empty value yields an empty list.
  std::vector<std::string> get_list(
      const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<double> get_double_list(
      const std::string& key, const std::vector<double>& fallback) const;

  //! Errors naming the first key that no getter ever consumed.
  void assert_all_consumed() const;

  //! Sorted `key = value` lines of every stored entry (manifest echo).
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace rddclust
