#pragma once

#include <filesystem>
#include <string>

namespace coteach {

std::string read_file(const std::filesystem::path& path);

// Temp-file + rename so readers never observe partial output.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace coteach
