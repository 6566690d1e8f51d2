#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "graze/model.hpp"

namespace graze {

using json = nlohmann::json;

/// Row-major nested arrays.
json matrix_json(const mat& m);
json vector_json(const vec& v);

/// FNV-1a 64-bit content hash, hex encoded; used by the run manifests.
std::string content_hash(const std::string& bytes);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Log verbosity from the GRAZE_LOG environment variable (0 silent, 1 info,
/// 2 debug).
int log_verbosity();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace graze
