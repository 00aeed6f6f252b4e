#include "har/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "har/error.hpp"

namespace har {

using nlohmann::json;

json to_json(const NetworkConfig& c) {
    json blocks = json::array();
    for (const auto& b : c.blocks) {
        blocks.push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"pool", b.pool}, {"dropout", b.dropout}});
    }
    return {
        {"channels", c.channels},
        {"window", c.window},
        {"bins", c.bins},
        {"embed_dim", c.embed_dim},
        {"smooth_width", c.smooth_width},
        {"blocks", blocks},
        {"classes", c.classes},
        {"clip_percentiles", {c.clip.low, c.clip.high}},
        {"clip_bound", c.clip_bound},
        {"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
    };
}

json to_json(const DiscretizerSpec& s) {
    return {{"bins", s.bins}, {"lo", s.lo}, {"hi", s.hi}, {"fitted", s.fitted}};
}

namespace {

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
}

ConvBlockConfig block_from_json(const json& j, std::size_t index) {
    if (!j.is_object()) throw ConfigError(fmt::format("config key 'blocks[{}]' must be an object", index));
    ConvBlockConfig b;
    for (const auto& [key, value] : j.items()) {
        if (key == "filters") b.filters = get_as<int>(j, key);
        else if (key == "kernel") b.kernel = get_as<int>(j, key);
        else if (key == "pool") b.pool = get_as<int>(j, key);
        else if (key == "dropout") b.dropout = get_as<double>(j, key);
        else throw ConfigError(fmt::format("unknown config key 'blocks[{}].{}'", index, key));
    }
    return b;
}

}  // namespace

void merge_network_config(const json& j, NetworkConfig& c) {
    if (!j.is_object()) throw ConfigError("network config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "channels") c.channels = get_as<int>(j, key);
        else if (key == "window") c.window = get_as<int>(j, key);
        else if (key == "bins") c.bins = get_as<int>(j, key);
        else if (key == "embed_dim") c.embed_dim = get_as<int>(j, key);
        else if (key == "smooth_width") c.smooth_width = get_as<int>(j, key);
        else if (key == "classes") c.classes = get_as<int>(j, key);
        else if (key == "clip_bound") c.clip_bound = get_as<double>(j, key);
        else if (key == "learning_rate") c.optimizer.learning_rate = get_as<double>(j, key);
        else if (key == "beta1") c.optimizer.beta1 = get_as<double>(j, key);
        else if (key == "beta2") c.optimizer.beta2 = get_as<double>(j, key);
        else if (key == "epsilon") c.optimizer.epsilon = get_as<double>(j, key);
        else if (key == "epochs") c.epochs = get_as<int>(j, key);
        else if (key == "batch_size") c.batch_size = get_as<int>(j, key);
        else if (key == "seed") c.seed = get_as<std::uint64_t>(j, key);
        else if (key == "clip_percentiles") {
            auto p = get_as<std::vector<double>>(j, key);
            if (p.size() != 2) throw ConfigError("config key 'clip_percentiles' needs two values");
            c.clip = {p[0], p[1]};
        } else if (key == "blocks") {
            if (!value.is_array()) throw ConfigError("config key 'blocks' must be an array");
            c.blocks.clear();
            for (std::size_t i = 0; i < value.size(); ++i) c.blocks.push_back(block_from_json(value[i], i));
        } else {
            throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
    }
}

NetworkConfig network_config_from_json(const json& j) {
    NetworkConfig c;
    merge_network_config(j, c);
    return c;
}

DiscretizerSpec discretizer_from_json(const json& j) {
    DiscretizerSpec s;
    try {
        s.bins = j.at("bins").get<int>();
        s.lo = j.at("lo").get<std::vector<double>>();
        s.hi = j.at("hi").get<std::vector<double>>();
        s.fitted = j.at("fitted").get<bool>();
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("bad discretizer record: {}", e.what()));
    }
    if (s.lo.size() != s.hi.size()) throw FormatError("discretizer lo/hi lengths differ");
    return s;
}

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::span<const std::uint8_t> bytes(std::size_t n) {
        if (n > in_.size() - pos_) {
            throw FormatError(fmt::format("checkpoint truncated at byte {} (needed {} more)", pos_, n));
        }
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return bytes(1)[0]; }
    std::uint16_t u16() {
        auto b = bytes(2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        auto b = bytes(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    bool done() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const TrainedModel& model) {
    json meta;
    meta["network"] = to_json(model.config);
    meta["discretizer"] = to_json(model.discretizer);
    json names = json::array();
    for (const auto& l : model.labels) names.push_back(l.name);
    meta["labels"] = names;
    const std::string blob = meta.dump();

    Writer w;
    w.bytes("HARM", 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.bytes(blob.data(), blob.size());
    w.u32(static_cast<std::uint32_t>(model.parameters.size()));
    for (const auto& p : model.parameters) {
        if (p.name.size() > 0xffff) throw ContractError("parameter name too long");
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u8(p.frozen ? 1 : 0);
        w.u8(static_cast<std::uint8_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : p.tensor.values()) w.f32(static_cast<float>(v));
    }
    return w.take();
}

TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "HARM", 4) != 0) {
        throw FormatError("not a HARM checkpoint: bad magic bytes (expected \"HARM\")");
    }
    Reader r(bytes);
    r.bytes(4);
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
    }
    const auto blob_len = r.u32();
    auto blob = r.bytes(blob_len);
    json meta;
    try {
        meta = json::parse(blob.begin(), blob.end());
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("checkpoint config blob is not valid JSON: {}", e.what()));
    }

    TrainedModel model;
    try {
        model.config = network_config_from_json(meta.at("network"));
        validate(model.config);
        model.labels = make_label_set(meta.at("labels").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("checkpoint config blob: {}", e.what()));
    } catch (const Error& e) {
        throw FormatError(fmt::format("checkpoint config blob: {}", e.what()));
    }
    if (!meta.contains("discretizer")) throw FormatError("checkpoint config blob has no discretizer");
    model.discretizer = discretizer_from_json(meta["discretizer"]);
    if (model.labels.size() != static_cast<std::size_t>(model.config.classes)) {
        throw FormatError("checkpoint label count does not match class count");
    }
    if (model.discretizer.channels() != static_cast<std::size_t>(model.config.channels)) {
        throw FormatError("checkpoint discretizer channel count does not match the network");
    }

    const auto layout = parameter_layout(model.config);
    const auto count = r.u32();
    if (count != layout.size()) {
        throw FormatError(fmt::format("checkpoint has {} parameters, network expects {}", count, layout.size()));
    }
    for (std::size_t i = 0; i < count; ++i) {
        const auto name_len = r.u16();
        auto name_bytes = r.bytes(name_len);
        std::string name(name_bytes.begin(), name_bytes.end());
        const bool frozen = r.u8() != 0;
        const auto rank = r.u8();
        Shape shape;
        for (std::size_t a = 0; a < rank; ++a) shape.push_back(r.u32());
        if (name != layout[i].first || shape != layout[i].second) {
            throw FormatError(fmt::format("checkpoint parameter {} is '{}' {}, expected '{}' {}", i, name,
                                          shape_string(shape), layout[i].first, shape_string(layout[i].second)));
        }
        Tensor t(shape);
        for (double& v : t.values()) v = static_cast<double>(r.f32());
        model.parameters.push_back({std::move(name), std::move(t), frozen});
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint parameters");
    return model;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) {
    return deserialize_model(read_file_bytes(path));
}

}  // namespace har
