#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace nlb {

// Minimal SHA-1, used for content hashes in reports and manifests.
class Sha1 {
 public:
  Sha1() = default;

  void update(const void* data, std::size_t len);
  // Finalizes and returns the 40-char lowercase hex digest.
  std::string hex_digest();

 private:
  void process_block(const unsigned char* block);

  std::uint32_t h_[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u,
                         0xC3D2E1F0u};
  unsigned char buffer_[64] = {};
  std::size_t buffer_len_ = 0;
  std::uint64_t total_len_ = 0;
};

std::string sha1_hex(const void* data, std::size_t len);

}  // namespace nlb
