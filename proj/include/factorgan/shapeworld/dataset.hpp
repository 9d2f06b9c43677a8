#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factorgan/core/image.hpp"
#include "factorgan/shapeworld/scene.hpp"

namespace fgan::shapeworld {

struct DatasetMeta {
  int resolution = 64;
  std::uint64_t seed = 0;
  int count = 0;
};

// Writes count images (PNG) plus params.csv and manifest.json into out_dir.
// Rendering fans out across workers; the manifest is written last.
void make_dataset(int count, int resolution, std::uint64_t seed,
                  const std::string& out_dir);

class Dataset {
 public:
  DatasetMeta meta;
  std::vector<SceneParams> params;

  Image<double> image(int i) const;
  int size() const { return static_cast<int>(params.size()); }
  const std::vector<std::uint8_t>& raw_rgb(int i) const { return images_[i]; }

  static Dataset load(const std::string& dir);

 private:
  std::vector<std::vector<std::uint8_t>> images_;  // interleaved 8-bit rows
};

std::string image_filename(int index);

}  // namespace fgan::shapeworld
