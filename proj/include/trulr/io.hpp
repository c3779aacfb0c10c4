#pragma once

#include <filesystem>
#include <string>

namespace trulr {

// 17 significant digits, '.' decimal point; "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double x);

// Writes to a temporary sibling and renames over the destination.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace trulr
