#include "avsf/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {
namespace {

constexpr char kBundleMagic[8] = {'A', 'V', 'S', 'F', 'B', 'N', 'D', 'L'};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string safe_file_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out += keep ? c : '_';
  }
  return out;
}

}  // namespace

std::string dtype_name(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kInt32: return "int32";
    case torch::kUInt8: return "uint8";
    default: fail(ErrorCode::FormatError, "unsupported dtype for serialization");
  }
}

torch::ScalarType parse_dtype(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  if (name == "int32") return torch::kInt32;
  if (name == "uint8") return torch::kUInt8;
  fail(ErrorCode::FormatError, "unknown dtype '" + name + "'");
}

std::string tensor_bytes(const torch::Tensor& tensor) {
  auto t = tensor.detach().to(torch::kCPU).contiguous();
  return std::string(static_cast<const char*>(t.data_ptr()), t.nbytes());
}

torch::Tensor tensor_from_bytes(const std::string& dtype, const std::vector<std::int64_t>& shape,
                                const char* data, std::size_t size) {
  auto t = torch::empty(shape, torch::TensorOptions().dtype(parse_dtype(dtype)));
  if (t.nbytes() != size) {
    fail(ErrorCode::FormatError, "payload size " + std::to_string(size) + " does not match shape");
  }
  std::memcpy(t.data_ptr(), data, size);
  return t;
}

void write_bundle(const std::filesystem::path& path, const TensorBundle& bundle) {
  nlohmann::json header;
  header["format_version"] = TensorBundle::kFormatVersion;
  header["meta"] = bundle.meta;
  header["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, tensor] : bundle.tensors) {
    std::string bytes = tensor_bytes(tensor);
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(tensor.scalar_type())},
                                 {"shape", tensor.sizes().vec()},
                                 {"offset", payload.size()},
                                 {"nbytes", bytes.size()}});
    payload += bytes;
  }
  const std::string header_text = header.dump();
  const std::uint64_t header_size = header_text.size();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out.write(kBundleMagic, sizeof kBundleMagic);
    for (int i = 0; i < 8; ++i) out.put(char((header_size >> (8 * i)) & 0xFF));
    out.write(header_text.data(), std::streamsize(header_text.size()));
    out.write(payload.data(), std::streamsize(payload.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::pair<nlohmann::json, std::size_t> parse_bundle_header(const std::string& bytes,
                                                           const std::filesystem::path& path) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kBundleMagic, 8) != 0) {
    fail(ErrorCode::FormatError, path.string() + " is not a tensor bundle");
  }
  std::uint64_t header_size = 0;
  for (int i = 0; i < 8; ++i) header_size |= std::uint64_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (16 + header_size > bytes.size()) fail(ErrorCode::FormatError, path.string() + ": truncated header");
  auto header = nlohmann::json::parse(bytes.substr(16, header_size));
  if (header.value("format_version", 0) != TensorBundle::kFormatVersion) {
    fail(ErrorCode::FormatError, path.string() + ": unsupported format_version");
  }
  return {header, 16 + header_size};
}

}  // namespace

nlohmann::json read_bundle_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::string prefix(16, '\0');
  in.read(prefix.data(), 16);
  if (in.gcount() != 16 || std::memcmp(prefix.data(), kBundleMagic, 8) != 0) {
    fail(ErrorCode::FormatError, path.string() + " is not a tensor bundle");
  }
  std::uint64_t header_size = 0;
  for (int i = 0; i < 8; ++i) header_size |= std::uint64_t(static_cast<unsigned char>(prefix[8 + i])) << (8 * i);
  std::string header_text(header_size, '\0');
  in.read(header_text.data(), std::streamsize(header_size));
  if (std::uint64_t(in.gcount()) != header_size) fail(ErrorCode::FormatError, path.string() + ": truncated header");
  return nlohmann::json::parse(header_text);
}

TensorBundle read_bundle(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  auto [header, data_start] = parse_bundle_header(bytes, path);
  TensorBundle bundle;
  bundle.meta = header["meta"];
  for (const auto& entry : header["tensors"]) {
    const auto offset = entry["offset"].get<std::size_t>();
    const auto nbytes = entry["nbytes"].get<std::size_t>();
    if (data_start + offset + nbytes > bytes.size()) {
      fail(ErrorCode::FormatError, path.string() + ": truncated payload");
    }
    bundle.tensors[entry["name"].get<std::string>()] =
        tensor_from_bytes(entry["dtype"].get<std::string>(), entry["shape"].get<std::vector<std::int64_t>>(),
                          bytes.data() + data_start + offset, nbytes);
  }
  return bundle;
}

void write_tensor_dir(const std::filesystem::path& dir, const std::map<std::string, torch::Tensor>& tensors) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, tensor] : tensors) {
    const std::string file = safe_file_name(name) + ".bin";
    const std::string bytes = tensor_bytes(tensor);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + (dir / file).string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    index.push_back({{"name", name},
                     {"dtype", dtype_name(tensor.scalar_type())},
                     {"shape", tensor.sizes().vec()},
                     {"file", file}});
  }
  write_json(dir / "tensors.json", index);
}

std::map<std::string, torch::Tensor> read_tensor_dir(const std::filesystem::path& dir) {
  const auto index = read_json(dir / "tensors.json");
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& entry : index) {
    const std::string bytes = slurp(dir / entry["file"].get<std::string>());
    tensors[entry["name"].get<std::string>()] =
        tensor_from_bytes(entry["dtype"].get<std::string>(),
                          entry["shape"].get<std::vector<std::int64_t>>(), bytes.data(), bytes.size());
  }
  return tensors;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  write_text(path, value.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace avsf
