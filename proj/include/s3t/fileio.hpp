#pragma once

#include <string>

namespace s3t {

std::string read_file(const std::string& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace s3t
