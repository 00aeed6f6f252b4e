#include "har/run_config.hpp"

#include <fstream>

#include <fmt/format.h>

#include "har/checkpoint.hpp"
#include "har/error.hpp"

namespace har {

using nlohmann::json;

namespace {

template <typename T>
T value_of(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
}

void require_object(const json& j, const std::string& key) {
    if (!j.is_object()) throw ConfigError(fmt::format("config key '{}' must be an object", key));
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    require_object(j, "<root>");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "dataset") {
            require_object(value, key);
            for (const auto& [k, v] : value.items()) {
                const auto path = "dataset." + k;
                if (k == "kind") c.dataset = value_of<std::string>(v, path);
                else if (k == "wisdm_window") c.wisdm.window = value_of<std::size_t>(v, path);
                else if (k == "wisdm_stride") c.wisdm.stride = value_of<std::size_t>(v, path);
                else if (k == "clip_bound") c.wisdm.clip_bound = value_of<double>(v, path);
                else if (k == "sda_columns") c.sda.channel_columns = value_of<std::vector<std::size_t>>(v, path);
                else throw ConfigError(fmt::format("unknown config key '{}'", path));
            }
        } else if (key == "network") {
            try {
                merge_network_config(value, c.network);
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("network: {}", e.what()));
            }
        } else if (key == "transfer") {
            require_object(value, key);
            for (const auto& [k, v] : value.items()) {
                const auto path = "transfer." + k;
                if (k == "k") c.transfer.k = value_of<int>(v, path);
                else if (k == "epochs") c.transfer.epochs = value_of<int>(v, path);
                else if (k == "learning_rate") c.transfer.learning_rate = value_of<double>(v, path);
                else if (k == "seed") c.transfer.seed = value_of<std::uint64_t>(v, path);
                else throw ConfigError(fmt::format("unknown config key '{}'", path));
            }
        } else if (key == "lr_baseline") {
            require_object(value, key);
            for (const auto& [k, v] : value.items()) {
                const auto path = "lr_baseline." + k;
                if (k == "epochs") c.lr_epochs = value_of<int>(v, path);
                else if (k == "learning_rate") c.lr_learning_rate = value_of<double>(v, path);
                else throw ConfigError(fmt::format("unknown config key '{}'", path));
            }
        } else if (key == "variants") {
            c.variants = value_of<std::vector<std::string>>(value, key);
            for (const auto& v : c.variants) check_variant(v);
        } else if (key == "seeds") {
            c.seeds = value_of<int>(value, key);
        } else if (key == "skip_deficient_subjects") {
            c.skip_deficient_subjects = value_of<bool>(value, key);
        } else {
            throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
    }
    if (c.dataset != "synth" && c.dataset != "wisdm" && c.dataset != "sda") {
        throw ConfigError(fmt::format("dataset.kind must be synth, wisdm or sda, got '{}'", c.dataset));
    }
    if (c.seeds < 1) throw ConfigError("seeds must be >= 1");
    if (c.transfer.k < 1) throw ConfigError("transfer.k must be >= 1");
    if (c.transfer.epochs < 0) throw ConfigError("transfer.epochs must be >= 0");
    if (c.lr_epochs < 0) throw ConfigError("lr_baseline.epochs must be >= 0");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open config '{}'", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
    return {
        {"dataset",
         {{"kind", c.dataset},
          {"wisdm_window", c.wisdm.window},
          {"wisdm_stride", c.wisdm.stride},
          {"clip_bound", c.wisdm.clip_bound},
          {"sda_columns", c.sda.channel_columns}}},
        {"network", to_json(c.network)},
        {"transfer",
         {{"k", c.transfer.k},
          {"epochs", c.transfer.epochs},
          {"learning_rate", c.transfer.learning_rate},
          {"seed", c.transfer.seed}}},
        {"lr_baseline", {{"epochs", c.lr_epochs}, {"learning_rate", c.lr_learning_rate}}},
        {"variants", c.variants},
        {"seeds", c.seeds},
        {"skip_deficient_subjects", c.skip_deficient_subjects},
    };
}

Dataset load_dataset(const std::string& kind, const std::filesystem::path& path, const RunConfig& config) {
    if (kind == "synth") return load_csv_dataset(path);
    if (kind == "wisdm") return load_wisdm(path, config.wisdm);
    if (kind == "sda") return load_sda(path, config.sda);
    throw ConfigError(fmt::format("unknown dataset kind '{}'", kind));
}

void write_config_lock(const json& effective, const std::filesystem::path& dir) {
    const auto path = dir / "config.lock.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << effective.dump(2) << '\n';
}

}  // namespace har
