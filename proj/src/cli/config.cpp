#include "graze/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace graze::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

run_config run_config::parse(const std::string& text) {
  run_config cfg;
  cfg.text_ = text;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw config_error("line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw config_error("line " + std::to_string(line_no) + ": empty section name");
      }
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw config_error("line " + std::to_string(line_no) + ": key outside any section");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw config_error("line " + std::to_string(line_no) + ": empty key");
    }
    auto& sec = cfg.sections_[section];
    if (sec.count(key)) {
      throw config_error("duplicate key \"" + key + "\" in [" + section + "]");
    }
    sec[key] = value;
  }
  return cfg;
}

run_config run_config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

bool run_config::has_section(const std::string& section) const {
  return sections_.count(section) > 0;
}

bool run_config::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string run_config::get_string(const std::string& section, const std::string& key,
                                   std::optional<std::string> fallback) const {
  auto it = sections_.find(section);
  if (it != sections_.end()) {
    auto kt = it->second.find(key);
    if (kt != it->second.end()) return kt->second;
  }
  if (fallback) return *fallback;
  throw config_error("missing key \"" + key + "\" in [" + section + "]");
}

double run_config::get_number(const std::string& section, const std::string& key,
                              std::optional<double> fallback) const {
  if (!has(section, key)) {
    if (fallback) return *fallback;
    throw config_error("missing key \"" + key + "\" in [" + section + "]");
  }
  const std::string v = get_string(section, key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw config_error("key \"" + key + "\" in [" + section + "]: not a number: " + v);
  }
  if (used != v.size()) {
    throw config_error("key \"" + key + "\" in [" + section + "]: trailing characters: " + v);
  }
  return out;
}

int run_config::get_int(const std::string& section, const std::string& key,
                        std::optional<int> fallback) const {
  if (!has(section, key) && fallback) return *fallback;
  const double v = get_number(section, key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw config_error("key \"" + key + "\" in [" + section + "]: expected an integer");
  }
  return i;
}

bool run_config::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("key \"" + key + "\" in [" + section + "]: expected a boolean");
}

std::vector<double> run_config::get_numbers(const std::string& section,
                                            const std::string& key) const {
  const std::string v = get_string(section, key);
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw config_error("key \"" + key + "\" in [" + section + "]: not a number: " + tok);
    }
  }
  return out;
}

std::map<std::string, double> run_config::number_table(
    const std::string& section, const std::vector<std::string>& skip) const {
  std::map<std::string, double> out;
  auto it = sections_.find(section);
  if (it == sections_.end()) return out;
  for (const auto& [key, value] : it->second) {
    if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
    out[key] = get_number(section, key);
  }
  return out;
}

void run_config::validate(const std::map<std::string, std::vector<std::string>>& schema) const {
  for (const auto& [section, keys] : sections_) {
    auto it = schema.find(section);
    if (it == schema.end()) {
      throw config_error("unknown section [" + section + "]");
    }
    if (std::find(it->second.begin(), it->second.end(), "*") != it->second.end()) continue;
    for (const auto& [key, value] : keys) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw config_error("unknown key \"" + key + "\" in [" + section + "]");
      }
    }
  }
}

}  // namespace graze::cli
