#include "factorgan/io/bundle.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "factorgan/core/common.hpp"

namespace fgan::io {

namespace {
constexpr char kMagic[8] = {'F', 'G', 'B', 'N', 'D', 'L', '0', '1'};
}

const std::vector<float>& TensorBundle::blob(const std::string& name) const {
  for (const auto& [n, v] : blobs)
    if (n == name) return v;
  throw ValidationError("bundle: missing blob '" + name + "'");
}

bool TensorBundle::has_blob(const std::string& name) const {
  for (const auto& [n, v] : blobs)
    if (n == name) return true;
  return false;
}

void save_bundle(const std::string& path, const TensorBundle& b) {
  Json meta = b.meta;
  Json index = Json::array();
  for (const auto& [name, data] : b.blobs)
    index.push_back({{"name", name}, {"size", data.size()}});
  meta["__blobs"] = index;
  const std::string js = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = js.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto& [name, data] : b.blobs)
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path);
}

TensorBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(path + " is not a bundle file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string js(len, '\0');
  in.read(js.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated bundle: " + path);

  TensorBundle b;
  b.meta = Json::parse(js);
  const Json index = b.meta.at("__blobs");
  b.meta.erase("__blobs");
  for (const auto& e : index) {
    std::vector<float> data(e.at("size").get<std::size_t>());
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw IoError("truncated bundle blob in " + path);
    b.blobs.emplace_back(e.at("name").get<std::string>(), std::move(data));
  }
  return b;
}

}  // namespace fgan::io
