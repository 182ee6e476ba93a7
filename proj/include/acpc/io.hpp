#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace acpc {

// Writes through a sibling temporary file and renames it into place, so a
// reader never observes a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// printf-style "%.17g".
std::string format_real(double value);

}  // namespace acpc
