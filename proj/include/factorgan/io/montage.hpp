#pragma once

#include <string>
#include <vector>

#include "factorgan/core/image.hpp"

namespace fgan::io {

// Tiles images (row-major, `cols` per row) into one PNG with a 2 px gutter.
void write_montage_png(const std::string& path,
                       const std::vector<Image<double>>& images, int cols);

}  // namespace fgan::io
