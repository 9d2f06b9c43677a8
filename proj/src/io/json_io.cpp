#include "factorgan/io/json_io.hpp"

#include <fstream>

#include "factorgan/core/common.hpp"
#include "factorgan/core/hash.hpp"

namespace fgan::io {

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError("bad json in " + path + ": " + e.what());
  }
  return j;
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::string json_hash(const Json& j) { return hash_bytes(j.dump()); }

void write_manifest(const std::string& dir, const std::string& kind,
                    const std::string& config_hash,
                    const std::map<std::string, std::string>& inputs,
                    const Json& extra) {
  Json j = extra;
  j["kind"] = kind;
  j["config_hash"] = config_hash;
  j["code_version"] = kVersion;
  j["inputs"] = Json::object();
  for (const auto& [name, hash] : inputs) j["inputs"][name] = hash;
  write_json(dir + "/manifest.json", j);
}

}  // namespace fgan::io
