#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sda::cli {

/// Bad command line shape (exit code 64).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { integer, real, text, choice, boolean, int_list, real_list };

/// One RunConfig field: flag `--key` with underscores spelled as dashes.
struct FieldSpec {
  std::string key;
  Kind kind = Kind::text;
  std::string fallback;
  std::string help;
  double lo = -1e300;  // inclusive bounds for numbers and list entries
  double hi = 1e300;
  bool lo_open = false;
  std::vector<std::string> choices;

  std::string flag() const;
};

/// Every field in serialization order.
const std::vector<FieldSpec>& field_specs();
const FieldSpec& field_spec(const std::string& key);

/// Flat key = value configuration. Every value is type-checked against its
/// FieldSpec when set; errors name the field and throw ConfigError.
class RunConfig {
 public:
  RunConfig();

  /// "key = value" lines, '#' comments. Unknown or repeated keys are errors.
  static RunConfig from_text(const std::string& text, const std::string& origin);
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

  const std::string& text(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  int int32(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;
  std::vector<double> real_list(const std::string& key) const;
  std::vector<std::string> text_list(const std::string& key) const;
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  /// Snapshot of every field in registry order; from_text round-trips it.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace sda::cli
