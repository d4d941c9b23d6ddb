#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace somtp::io {

/// Whole-file read; throws FormatError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::vector<std::string> split(std::string_view line, char delim);

double parse_double(std::string_view s);

}  // namespace somtp::io
