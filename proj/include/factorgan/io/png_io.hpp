#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fgan::io {

// 8-bit RGB PNG, fixed encoder settings so byte output is reproducible.
// `rgb` is row-major, interleaved: (y * width + x) * 3 + channel.
void write_png(const std::string& path, const std::uint8_t* rgb, int width,
               int height);

struct PngImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

PngImage read_png(const std::string& path);

}  // namespace fgan::io
