#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace haystack {

std::string read_file(const std::filesystem::path& path);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// SHA-256 over every regular file below `root`, visited in sorted relative
/// path order; each file contributes its relative path, a NUL, its size and
/// its bytes.
std::string directory_checksum(const std::filesystem::path& root);

}  // namespace haystack
