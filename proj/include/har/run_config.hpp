#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/datasets.hpp"
#include "har/eval.hpp"
#include "har/model.hpp"
#include "har/transfer.hpp"

namespace har {

/// Everything a CLI run can be configured with. Every field has a default;
/// a JSON file overrides any subset and unknown keys are rejected.
struct RunConfig {
    std::string dataset = "synth";  // synth | wisdm | sda
    WisdmOptions wisdm;
    SdaOptions sda;
    NetworkConfig network;
    TransferSpec transfer;
    int lr_epochs = 500;
    double lr_learning_rate = 0.1;
    std::vector<std::string> variants{std::string(kVariantTrc), std::string(kVariantFrozenSource),
                                      std::string(kVariantLrBaseline)};
    int seeds = 5;
    bool skip_deficient_subjects = false;
};

/// ConfigError names the first unknown or mistyped key.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Loads the dataset selected by `kind` from `path`.
Dataset load_dataset(const std::string& kind, const std::filesystem::path& path, const RunConfig& config);

/// Writes `config.lock.json` (pretty-printed effective config) into `dir`.
void write_config_lock(const nlohmann::json& effective, const std::filesystem::path& dir);

}  // namespace har
