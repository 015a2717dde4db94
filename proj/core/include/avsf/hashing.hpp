#pragma once

#include <filesystem>
#include <string>

namespace avsf {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Hash of a checkpoint directory: its config.json and tensor index plus
/// every tensor file, in index order.
std::string sha256_checkpoint(const std::filesystem::path& dir);

}  // namespace avsf
