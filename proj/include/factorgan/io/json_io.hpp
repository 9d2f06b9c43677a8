#pragma once

#include <json.hpp>
#include <map>
#include <string>

namespace fgan::io {

using Json = nlohmann::json;

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& j);

// fnv64 fingerprint of the compact serialized form (nlohmann objects are
// key-sorted, so this is canonical).
std::string json_hash(const Json& j);

// Every artifact directory gets one of these, written last on success.
void write_manifest(const std::string& dir, const std::string& kind,
                    const std::string& config_hash,
                    const std::map<std::string, std::string>& inputs,
                    const Json& extra = Json::object());

}  // namespace fgan::io
