#pragma once

#include <filesystem>
#include <string>

namespace gate {

// Whole-file reads and writes; throws ConfigError naming the path on
// failure. write_file creates missing parent directories.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace gate
