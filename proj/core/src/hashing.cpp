#include "avsf/hashing.hpp"

#include <fstream>

#include <openssl/evp.h>

#include "avsf/error.hpp"
#include "avsf/tensor_io.hpp"

namespace avsf {
namespace {

class Digest {
 public:
  Digest() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Digest() { EVP_MD_CTX_free(ctx_); }
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;

  void update(const void* data, std::size_t size) { EVP_DigestUpdate(ctx_, data, size); }

  void update_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string buffer(1 << 16, '\0');
    while (in) {
      in.read(buffer.data(), std::streamsize(buffer.size()));
      update(buffer.data(), std::size_t(in.gcount()));
    }
  }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int size = 0;
    EVP_DigestFinal_ex(ctx_, digest, &size);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < size; ++i) {
      out += kHex[digest[i] >> 4];
      out += kHex[digest[i] & 0xF];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Digest d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  Digest d;
  d.update_file(path);
  return d.hex();
}

std::string sha256_checkpoint(const std::filesystem::path& dir) {
  Digest d;
  d.update_file(dir / "config.json");
  d.update_file(dir / "tensors.json");
  for (const auto& entry : read_json(dir / "tensors.json")) d.update_file(dir / entry["file"].get<std::string>());
  return d.hex();
}

}  // namespace avsf
