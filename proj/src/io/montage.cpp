#include "factorgan/io/montage.hpp"

#include "factorgan/io/png_io.hpp"

namespace fgan::io {

void write_montage_png(const std::string& path,
                       const std::vector<Image<double>>& images, int cols) {
  if (images.empty()) throw ValidationError("montage: no images");
  if (cols < 1) throw ValidationError("montage: cols must be >= 1");
  const int res = images[0].res;
  for (const auto& img : images)
    if (img.res != res)
      throw ValidationError("montage: images must share a resolution");
  const int rows =
      (static_cast<int>(images.size()) + cols - 1) / cols;
  const int gutter = 2;
  const int w = cols * res + (cols - 1) * gutter;
  const int h = rows * res + (rows - 1) * gutter;
  std::vector<std::uint8_t> canvas(std::size_t(w) * h * 3, 24);
  for (std::size_t idx = 0; idx < images.size(); ++idx) {
    const int r = static_cast<int>(idx) / cols;
    const int c = static_cast<int>(idx) % cols;
    const auto rgb = to_u8(images[idx]);
    const int oy = r * (res + gutter), ox = c * (res + gutter);
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        for (int ch = 0; ch < 3; ++ch)
          canvas[((std::size_t(oy + y) * w) + ox + x) * 3 + ch] =
              rgb[(std::size_t(y) * res + x) * 3 + ch];
  }
  write_png(path, canvas.data(), w, h);
}

}  // namespace fgan::io
