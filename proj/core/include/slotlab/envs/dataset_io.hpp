#pragma once

#include <string>

#include <json.hpp>

#include "slotlab/envs/buffer.hpp"

namespace slotlab::envs {

// Dataset file layout (all integers little-endian):
//   "SLDS" | u32 version | u8 env id | u32 K | u32 channels | u32 H | u32 W |
//   u32 N | u32 T | u32 len + JSON header text (environment parameters,
//   attribute assignment, caller provenance including the split)
// then N episodes, each:
//   (T+1) observations, H*W*channels bytes, channels interleaved
//   T actions as (object u8, direction u8); (255,255) means no action
//   grid envs:  (T+1) x K x (i32 row, i32 col, i32 shape id, i32 color id)
//   three-body: (T+2) x K x (f64 px, py, vx, vy, mass), pre-roll state first
inline constexpr std::uint32_t kDatasetVersion = 1;

nlohmann::json CatalogToJson(const AttributeCatalog& catalog);
AttributeCatalog CatalogFromJson(const nlohmann::json& j);
nlohmann::json EnvToJson(const EnvSpec& env);
EnvSpec EnvFromJson(const nlohmann::json& j);
nlohmann::json AssignmentToJson(const Assignment& assignment);
Assignment AssignmentFromJson(const nlohmann::json& j);

std::string SerializeDataset(const ExperienceBuffer& buffer);
ExperienceBuffer ParseDataset(const std::string& bytes);
void WriteDataset(const std::string& path, const ExperienceBuffer& buffer);
ExperienceBuffer ReadDataset(const std::string& path);

// Header fields as structured JSON; reads only the header from `path`.
nlohmann::json DatasetManifest(const std::string& path);
nlohmann::json DatasetManifest(const ExperienceBuffer& buffer);

}  // namespace slotlab::envs
