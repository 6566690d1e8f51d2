#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace graze::cli {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sections of key = value pairs; '#' and ';' start comments. Unknown
/// sections and keys are rejected against a per-command schema.
class run_config {
 public:
  static run_config parse(const std::string& text);
  static run_config parse_file(const std::string& path);

  bool has_section(const std::string& section) const;
  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         std::optional<std::string> fallback = std::nullopt) const;
  double get_number(const std::string& section, const std::string& key,
                    std::optional<double> fallback = std::nullopt) const;
  int get_int(const std::string& section, const std::string& key,
              std::optional<int> fallback = std::nullopt) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  /// Whitespace-separated list of numbers.
  std::vector<double> get_numbers(const std::string& section, const std::string& key) const;

  /// All keys of a section as a number map (used for the system parameter
  /// table, where the schema is the registry's).
  std::map<std::string, double> number_table(const std::string& section,
                                             const std::vector<std::string>& skip = {}) const;

  /// Rejects any section/key outside the schema. The wildcard value "*"
  /// accepts every key of that section.
  void validate(const std::map<std::string, std::vector<std::string>>& schema) const;

  const std::string& text() const { return text_; }

 private:
  std::string text_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace graze::cli
