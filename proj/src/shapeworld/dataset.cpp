#include "factorgan/shapeworld/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "factorgan/core/hash.hpp"
#include "factorgan/core/parallel.hpp"
#include "factorgan/io/json_io.hpp"
#include "factorgan/io/png_io.hpp"
#include "factorgan/io/table.hpp"
#include "factorgan/shapeworld/render.hpp"

namespace fgan::shapeworld {

namespace fs = std::filesystem;

std::string image_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06d.png", index);
  return buf;
}

void make_dataset(int count, int resolution, std::uint64_t seed,
                  const std::string& out_dir) {
  if (count < 1) throw ValidationError("dataset count must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset dir " + out_dir);

  const Rng root = Rng::seeded(seed);
  std::vector<SceneParams> params(count);
  for (int i = 0; i < count; ++i) {
    Rng r = root.derive("scene", static_cast<std::uint64_t>(i));
    params[i] = sample_scene(r);
  }

  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    const Image<double> img = render(params[i], resolution);
    const auto rgb = to_u8(img);
    io::write_png(out_dir + "/" + image_filename(static_cast<int>(i)),
                  rgb.data(), resolution, resolution);
  });

  io::Table t;
  t.header = {"id", "shape_class", "x",  "y",  "theta", "scale",  "r",
              "g",  "b",           "gx", "gy", "b0",    "bg_seed"};
  for (int i = 0; i < count; ++i) {
    const auto& p = params[i];
    t.rows.push_back({double(i), double(p.shape_class), p.x, p.y, p.theta,
                      p.scale, p.r, p.g, p.b, p.gx, p.gy, p.b0,
                      double(p.bg_seed)});
  }
  io::write_csv(out_dir + "/params.csv", t);

  io::Json extra;
  extra["resolution"] = resolution;
  extra["seed"] = seed;
  extra["count"] = count;
  io::write_manifest(out_dir, "dataset", "",
                     {{"params.csv", hash_file(out_dir + "/params.csv")}},
                     extra);
}

Dataset Dataset::load(const std::string& dir) {
  Dataset d;
  const io::Json m = io::read_json(dir + "/manifest.json");
  if (m.value("kind", "") != "dataset")
    throw ValidationError(dir + " is not a dataset directory");
  d.meta.resolution = m.at("resolution").get<int>();
  d.meta.seed = m.at("seed").get<std::uint64_t>();
  d.meta.count = m.at("count").get<int>();

  const io::Table t = io::read_csv(dir + "/params.csv");
  if (static_cast<int>(t.rows.size()) != d.meta.count)
    throw IoError("dataset " + dir + ": params.csv row count mismatch");
  const int c_class = t.col("shape_class");
  for (const auto& row : t.rows) {
    SceneParams p;
    p.shape_class = static_cast<int>(row[c_class]);
    p.x = row[t.col("x")];
    p.y = row[t.col("y")];
    p.theta = row[t.col("theta")];
    p.scale = row[t.col("scale")];
    p.r = row[t.col("r")];
    p.g = row[t.col("g")];
    p.b = row[t.col("b")];
    p.gx = row[t.col("gx")];
    p.gy = row[t.col("gy")];
    p.b0 = row[t.col("b0")];
    p.bg_seed = static_cast<std::uint32_t>(row[t.col("bg_seed")]);
    d.params.push_back(p);
  }

  d.images_.resize(d.meta.count);
  parallel_for(static_cast<std::size_t>(d.meta.count), [&](std::size_t i) {
    const auto png =
        io::read_png(dir + "/" + image_filename(static_cast<int>(i)));
    if (png.width != d.meta.resolution || png.height != d.meta.resolution)
      throw IoError("dataset image has wrong resolution: " +
                    image_filename(static_cast<int>(i)));
    d.images_[i] = png.rgb;
  });
  return d;
}

Image<double> Dataset::image(int i) const {
  return from_u8<double>(images_[i].data(), meta.resolution);
}

}  // namespace fgan::shapeworld
