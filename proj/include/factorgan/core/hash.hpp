#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fgan {

// 64-bit FNV-1a. Used for config/artifact fingerprints, not security.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Fingerprint of a file's bytes, "fnv64:<16 hex digits>".
std::string hash_file(const std::string& path);
std::string hash_bytes(std::string_view bytes);

}  // namespace fgan
