#include "saesteer/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "saesteer/error.hpp"
#include "saesteer/types.hpp"

namespace saesteer {

std::uint32_t FeatureManifest::intern(std::string_view name) {
  const std::string canon = canonical_name(name);
  if (canon.empty()) throw ValidationError("profession name is empty");
  if (const auto id = find(canon)) return *id;
  const std::uint32_t id = professions.empty() ? 0 : professions.rbegin()->first + 1;
  professions.emplace(id, canon);
  return id;
}

std::optional<std::uint32_t> FeatureManifest::find(std::string_view name) const {
  const std::string canon = canonical_name(name);
  for (const auto& [id, n] : professions) {
    if (n == canon) return id;
  }
  return std::nullopt;
}

std::string FeatureManifest::name_or_placeholder(std::uint32_t id) const {
  const auto it = professions.find(id);
  return it != professions.end() ? it->second : "profession_" + std::to_string(id);
}

std::string manifest_path_for(const std::string& feature_path) {
  return feature_path + ".manifest.json";
}

FeatureManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path + " is not valid JSON: " + e.what());
  }
  FeatureManifest m;
  try {
    std::set<std::string> seen;
    for (const auto& [key, value] : doc.at("professions").items()) {
      std::uint32_t id = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
      if (ec != std::errc() || ptr != key.data() + key.size()) {
        throw ValidationError("manifest " + path + ": profession key '" + key +
                              "' is not an unsigned integer");
      }
      const std::string canon = canonical_name(value.get<std::string>());
      if (!seen.insert(canon).second) {
        throw ValidationError("manifest " + path + ": profession '" + canon +
                              "' appears under more than one id");
      }
      m.professions.emplace(id, canon);
    }
    m.source_model = doc.value("source_model", "");
    m.layer = doc.value("layer", "");
    m.extraction_date = doc.value("extraction_date", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path + " is malformed: " + e.what());
  }
  return m;
}

void write_manifest(const std::string& path, const FeatureManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["professions"] = nlohmann::ordered_json::object();
  for (const auto& [id, name] : manifest.professions) {
    doc["professions"][std::to_string(id)] = name;
  }
  doc["source_model"] = manifest.source_model;
  doc["layer"] = manifest.layer;
  doc["extraction_date"] = manifest.extraction_date;
  io::write_text_atomic(path, doc.dump(2) + "\n");
}

}  // namespace saesteer
