#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace clustmd {

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
std::string fnv1a_file(const std::filesystem::path& path);

/// Entry point for the clustmd tool. Returns 0 on success, 1 on a runtime
/// failure and 2 on a usage or validation error.
int run_cli(int argc, char** argv);

}  // namespace clustmd
