#pragma once

#include <string>
#include <utility>
#include <vector>

#include "factorgan/io/json_io.hpp"

namespace fgan::io {

// Single-file container: JSON metadata plus named float32 blobs, written
// in order. Byte-identical for identical contents.
struct TensorBundle {
  Json meta;
  std::vector<std::pair<std::string, std::vector<float>>> blobs;

  const std::vector<float>& blob(const std::string& name) const;
  bool has_blob(const std::string& name) const;
};

void save_bundle(const std::string& path, const TensorBundle& b);
TensorBundle load_bundle(const std::string& path);

}  // namespace fgan::io
