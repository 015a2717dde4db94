#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/types.h>

namespace avsf {

std::string dtype_name(torch::ScalarType type);
torch::ScalarType parse_dtype(const std::string& name);

/// Raw little-endian bytes of a contiguous CPU tensor.
std::string tensor_bytes(const torch::Tensor& tensor);
torch::Tensor tensor_from_bytes(const std::string& dtype, const std::vector<std::int64_t>& shape,
                                const char* data, std::size_t size);

/// Single-file container: magic "AVSFBNDL", u64 header length, JSON header
/// {"format_version", "meta", "tensors": [{name, dtype, shape, offset, nbytes}]},
/// then tensor payloads.
struct TensorBundle {
  static constexpr int kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;
};

void write_bundle(const std::filesystem::path& path, const TensorBundle& bundle);
TensorBundle read_bundle(const std::filesystem::path& path);
/// Reads only the JSON header (used for cache freshness checks).
nlohmann::json read_bundle_header(const std::filesystem::path& path);

/// Directory of named raw tensors: tensors.json index plus one .bin file per tensor.
void write_tensor_dir(const std::filesystem::path& dir, const std::map<std::string, torch::Tensor>& tensors);
std::map<std::string, torch::Tensor> read_tensor_dir(const std::filesystem::path& dir);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace avsf
