#pragma once

// JSON sidecar describing a feature file:
//   { "professions": { "0": "nurse", ... }, "source_model": ..., "layer": ...,
//     "extraction_date": ... }

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace saesteer {

struct FeatureManifest {
  std::map<std::uint32_t, std::string> professions;  // id -> canonical name
  std::string source_model;
  std::string layer;
  std::string extraction_date;

  // Canonicalizes `name`; returns its id, assigning the next free id on first sight.
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  // Name for `id`, or "profession_<id>" when the manifest has no entry.
  std::string name_or_placeholder(std::uint32_t id) const;
};

std::string manifest_path_for(const std::string& feature_path);

FeatureManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const FeatureManifest& manifest);

}  // namespace saesteer
