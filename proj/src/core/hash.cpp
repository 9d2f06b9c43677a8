#include "factorgan/core/hash.hpp"

#include <fstream>
#include <sstream>

#include "factorgan/core/common.hpp"

namespace fgan {

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string hash_bytes(std::string_view bytes) {
  return "fnv64:" + hex64(fnv1a64(bytes));
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_bytes(ss.str());
}

}  // namespace fgan
