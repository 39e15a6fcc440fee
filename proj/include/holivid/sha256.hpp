#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace holivid {

// Minimal SHA-256 (FIPS 180-4).  Used to fingerprint taxonomies so that
// checkpoints can detect label-space mismatches.
class Sha256 {
public:
  Sha256();
  void update(const void* data, size_t len);
  // Finalises and returns the lowercase hex digest.  The object must not be
  // updated afterwards.
  std::string hex_digest();

private:
  void process_block(const uint8_t* block);
  uint32_t h_[8];
  uint8_t buf_[64];
  size_t buf_len_;
  uint64_t total_len_;
};

std::string sha256_hex(const std::string& data);

}  // namespace holivid
