#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmgeo/scene_forge.hpp"

namespace vlmgeo {

nlohmann::json to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j);

nlohmann::json to_json(const VisualSearchTrial& trial);
VisualSearchTrial visual_search_trial_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SimilarityTrial& trial);
SimilarityTrial similarity_trial_from_json(const nlohmann::json& j);

// One JSON document per line.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Writes <dir>/scenes.jsonl and, when `png` is set, <dir>/<scene id>.png.
void write_scene_corpus(const std::filesystem::path& dir, const std::vector<SceneSpec>& scenes, bool png,
                        const Palette& palette = {});
std::vector<SceneSpec> read_scene_corpus(const std::filesystem::path& dir);

void write_png(const std::filesystem::path& path, const Raster& image);

}  // namespace vlmgeo
