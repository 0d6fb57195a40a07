#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dryfuse {

// Incremental SHA-256, hex-encoded digest.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  void update_file(const std::filesystem::path& path);
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);

}  // namespace dryfuse
