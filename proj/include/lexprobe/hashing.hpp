#pragma once

// SHA-256 digests used for cache keys and result provenance.

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace lexprobe {

class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const unsigned char> bytes);
  Sha256& update(std::string_view text);
  // Length-prefixed, so ("ab", "c") and ("a", "bc") hash differently.
  Sha256& field(std::string_view text);
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view text);

// Digest of a file's bytes, or for a directory of every regular file below
// it (relative path and content, in sorted path order).
std::string hash_path(const std::filesystem::path& path);

}  // namespace lexprobe
