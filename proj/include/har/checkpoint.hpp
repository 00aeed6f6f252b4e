#pragma once

// "HARM" model checkpoints.
//
// Layout (all integers little-endian):
//   4 bytes   magic "HARM"
//   u32       version (1)
//   u32       length of the JSON blob, then the UTF-8 JSON blob holding
//             {"network": ..., "discretizer": ..., "labels": [...]}
//   u32       parameter count
//   per parameter:
//     u16 name length, UTF-8 name, u8 frozen flag, u8 rank,
//     rank x u32 dims, then the values as 32-bit floats

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "har/model.hpp"

namespace har {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json to_json(const NetworkConfig& config);
nlohmann::json to_json(const DiscretizerSpec& spec);

/// Overwrites the fields present in `j`. Unknown keys and wrongly typed
/// values raise ConfigError naming the key.
void merge_network_config(const nlohmann::json& j, NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);
DiscretizerSpec discretizer_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> serialize_model(const TrainedModel& model);
/// Throws FormatError on bad magic, version, or truncated/inconsistent data.
TrainedModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

/// Reads a whole file; IoError when it cannot be opened.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace har
