#include "har/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "har/error.hpp"
#include "har/random.hpp"

namespace har {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t Dataset::channels() const {
    return segments.empty() ? 0 : segments.front().num_channels();
}

std::size_t Dataset::window() const {
    return segments.empty() ? 0 : segments.front().window();
}

std::vector<std::string> Dataset::label_names() const {
    std::vector<std::string> names;
    for (const auto& l : labels) names.push_back(l.name);
    return names;
}

std::vector<SegmentTensor> Dataset::segments_of(std::string_view subject) const {
    std::vector<SegmentTensor> out;
    for (const auto& s : segments) {
        if (s.subject_id == subject) out.push_back(s);
    }
    return out;
}

std::vector<std::string> subjects_of(const std::vector<SegmentTensor>& segments) {
    std::set<std::string> ids;
    for (const auto& s : segments) ids.insert(s.subject_id);
    return {ids.begin(), ids.end()};
}

void validate(const Dataset& d) {
    if (d.labels.size() < 2) throw DataError(fmt::format("dataset '{}' declares fewer than 2 activities", d.name));
    std::set<std::string> names;
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        if (d.labels[i].index != static_cast<int>(i)) {
            throw DataError(fmt::format("dataset '{}': label indices are not contiguous", d.name));
        }
        if (!names.insert(d.labels[i].name).second) {
            throw DataError(fmt::format("dataset '{}': duplicate label '{}'", d.name, d.labels[i].name));
        }
    }
    if (d.subjects.size() < 2) {
        throw DataError(fmt::format("dataset '{}' has {} subject(s); at least 2 are needed", d.name, d.subjects.size()));
    }
    if (!std::is_sorted(d.subjects.begin(), d.subjects.end()) ||
        std::adjacent_find(d.subjects.begin(), d.subjects.end()) != d.subjects.end()) {
        throw DataError(fmt::format("dataset '{}': subject list must be sorted and unique", d.name));
    }
    const std::set<std::string> subjects(d.subjects.begin(), d.subjects.end());
    std::set<std::uint64_t> uids;
    for (const auto& s : d.segments) {
        if (!subjects.contains(s.subject_id)) {
            throw DataError(fmt::format("dataset '{}': segment subject '{}' is undeclared", d.name, s.subject_id));
        }
        if (s.label < 0 || s.label >= d.classes()) {
            throw DataError(fmt::format("dataset '{}': segment label {} is undeclared", d.name, s.label));
        }
        if (s.channels.rank() != 2 || s.num_channels() != d.channels() || s.window() != d.window()) {
            throw DataError(fmt::format("dataset '{}': segment shape {} differs from [{} x {}]", d.name,
                                        shape_string(s.channels.shape()), d.channels(), d.window()));
        }
        if (!uids.insert(s.uid).second) {
            throw DataError(fmt::format("dataset '{}': duplicate segment uid {}", d.name, s.uid));
        }
    }
}

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

double parse_double_or_throw(std::string_view s, const std::string& where) {
    double v = 0.0;
    if (!parse_number(s, v) || !std::isfinite(v)) {
        throw FormatError(fmt::format("{}: '{}' is not a finite number", where, std::string(s)));
    }
    return v;
}

int label_index(const std::vector<std::string>& names, std::string_view name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

/// Splits a sample stream into contiguous (subject, activity) runs and
/// segments each; uids are assigned in order.
std::vector<SegmentTensor> segment_runs(const std::vector<RawSample>& samples, std::size_t window,
                                        std::size_t stride, std::size_t* runs) {
    std::vector<SegmentTensor> out;
    std::size_t begin = 0;
    std::size_t nruns = 0;
    while (begin < samples.size()) {
        std::size_t end = begin + 1;
        while (end < samples.size() && samples[end].subject_id == samples[begin].subject_id &&
               samples[end].activity == samples[begin].activity) {
            ++end;
        }
        auto segs = segment(std::span(samples).subspan(begin, end - begin), window, stride);
        for (auto& s : segs) {
            s.uid = out.size();
            out.push_back(std::move(s));
        }
        ++nruns;
        begin = end;
    }
    if (runs) *runs = nruns;
    return out;
}

}  // namespace

// --- WISDM ---------------------------------------------------------------

const std::vector<std::string>& wisdm_activities() {
    static const std::vector<std::string> names{"Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing"};
    return names;
}

std::optional<RawSample> parse_wisdm_record(std::string_view record, double clip_bound) {
    record = trim(record);
    if (!record.empty() && record.back() == ';') record.remove_suffix(1);
    const auto fields = split(record, ',');
    if (fields.size() != 6) return std::nullopt;
    RawSample s;
    s.subject_id = std::string(trim(fields[0]));
    if (s.subject_id.empty()) return std::nullopt;
    s.activity = label_index(wisdm_activities(), trim(fields[1]));
    if (s.activity < 0) return std::nullopt;
    if (!parse_number(fields[2], s.timestamp_ns)) return std::nullopt;
    double xyz[3];
    for (int a = 0; a < 3; ++a) {
        if (!parse_number(fields[static_cast<std::size_t>(3 + a)], xyz[a]) || !std::isfinite(xyz[a])) {
            return std::nullopt;
        }
        xyz[a] = std::clamp(xyz[a], -clip_bound, clip_bound);
    }
    s.ax = xyz[0];
    s.ay = xyz[1];
    s.az = xyz[2];
    return s;
}

std::string format_wisdm_record(const RawSample& s) {
    return fmt::format("{},{},{},{},{},{};", s.subject_id, wisdm_activities().at(static_cast<std::size_t>(s.activity)),
                       s.timestamp_ns, s.ax, s.ay, s.az);
}

Dataset load_wisdm(const fs::path& path, const WisdmOptions& options, WisdmStats* stats) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open WISDM file '{}'", path.string()));
    WisdmStats st;
    std::vector<RawSample> samples;
    std::string line;
    std::size_t empty_lines = 0;
    while (std::getline(in, line)) {
        const auto body = trim(line);
        if (body.empty()) {
            empty_lines += 1;
            st.malformed += 1;
            continue;
        }
        // some raw lines carry more than one ';'-terminated record
        for (auto rec : split(body, ';')) {
            if (trim(rec).empty()) continue;
            st.records += 1;
            if (auto s = parse_wisdm_record(rec, options.clip_bound)) {
                samples.push_back(std::move(*s));
            } else {
                st.malformed += 1;
            }
        }
    }
    if (in.bad()) throw IoError(fmt::format("error reading '{}'", path.string()));
    const std::size_t total = st.records + empty_lines;
    const double frac = total == 0 ? 0.0 : static_cast<double>(st.malformed) / static_cast<double>(total);
    if (frac > options.max_malformed_fraction) {
        throw FormatError(fmt::format("WISDM file '{}': {} malformed lines ({:.1f}% > {:.1f}%)", path.string(),
                                      st.malformed, 100.0 * frac, 100.0 * options.max_malformed_fraction));
    }
    if (st.malformed > 0) spdlog::info("WISDM: skipped {} malformed lines", st.malformed);

    Dataset d;
    d.name = "wisdm";
    d.labels = make_label_set(wisdm_activities());
    d.sample_rate_hz = 20.0;
    d.segments = segment_runs(samples, options.window, options.stride, &st.runs);
    d.subjects = subjects_of(d.segments);
    if (stats) *stats = st;
    return d;
}

// --- SDA -----------------------------------------------------------------

std::vector<std::size_t> sda_default_channel_columns() {
    std::vector<std::size_t> cols;
    for (std::size_t u = 0; u < 5; ++u) {
        for (std::size_t a = 0; a < 3; ++a) cols.push_back(9 * u + a);
    }
    return cols;
}

SegmentTensor read_sda_segment(const fs::path& file, const SdaOptions& options) {
    if (options.channel_columns.empty() || options.channel_columns.size() % 3 != 0) {
        throw ConfigError("SDA channel column map must list 3 columns per unit");
    }
    for (auto c : options.channel_columns) {
        if (c >= options.columns) {
            throw ConfigError(fmt::format("SDA channel column {} outside the {} file columns", c, options.columns));
        }
    }
    std::ifstream in(file);
    if (!in) throw IoError(fmt::format("cannot open SDA file '{}'", file.string()));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        if (fields.size() != options.columns) {
            throw FormatError(fmt::format("SDA file '{}' row {} has {} columns, expected {}", file.string(),
                                          rows.size() + 1, fields.size(), options.columns));
        }
        std::vector<double> row(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            row[i] = parse_double_or_throw(fields[i], fmt::format("SDA file '{}' row {}", file.string(), rows.size() + 1));
        }
        rows.push_back(std::move(row));
    }
    if (rows.size() != options.rows) {
        throw FormatError(fmt::format("SDA file '{}' has {} rows, expected {}", file.string(), rows.size(), options.rows));
    }
    const std::size_t units = options.channel_columns.size() / 3;
    std::vector<SegmentTensor> per_unit;
    for (std::size_t u = 0; u < units; ++u) {
        Tensor ch({3, rows.size()});
        for (std::size_t a = 0; a < 3; ++a) {
            const auto col = options.channel_columns[3 * u + a];
            for (std::size_t t = 0; t < rows.size(); ++t) ch.at(a, t) = rows[t][col];
        }
        per_unit.push_back({std::move(ch), 0, {}, 0, 0});
    }
    return stack_channels(per_unit);
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    }
    if (ec) throw IoError(fmt::format("cannot list '{}': {}", dir.string(), ec.message()));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

Dataset load_sda(const fs::path& root, const SdaOptions& options) {
    if (!fs::is_directory(root)) throw IoError(fmt::format("SDA root '{}' is not a directory", root.string()));
    Dataset d;
    d.name = "sda";
    d.sample_rate_hz = options.sample_rate_hz;
    std::vector<std::string> activity_names;
    for (const auto& adir : sorted_entries(root, true)) activity_names.push_back(adir.filename().string());
    d.labels = make_label_set(activity_names);
    std::uint64_t uid = 0;
    const auto activity_dirs = sorted_entries(root, true);
    for (std::size_t a = 0; a < activity_dirs.size(); ++a) {
        for (const auto& sdir : sorted_entries(activity_dirs[a], true)) {
            const auto subject = sdir.filename().string();
            const auto files = sorted_entries(sdir, false);
            for (std::size_t f = 0; f < files.size(); ++f) {
                auto seg = read_sda_segment(files[f], options);
                seg.label = static_cast<int>(a);
                seg.subject_id = subject;
                seg.origin_index = f;
                seg.uid = uid++;
                d.segments.push_back(std::move(seg));
            }
        }
    }
    d.subjects = subjects_of(d.segments);
    return d;
}

// --- synthetic -----------------------------------------------------------

void validate(const SynthConfig& c) {
    if (c.subjects < 2) {
        throw ConfigError(fmt::format("synthetic data needs >= 2 subjects for leave-one-subject-out, got {}", c.subjects));
    }
    if (c.activities < 2) throw ConfigError(fmt::format("synthetic data needs >= 2 activities, got {}", c.activities));
    if (c.segments_per_activity < 1) throw ConfigError("segments_per_activity must be >= 1");
    if (c.window < 1) throw ConfigError("window must be >= 1");
    if (c.channels < 1) throw ConfigError("channels must be >= 1");
    if (c.frequencies_hz.size() != static_cast<std::size_t>(c.activities)) {
        throw ConfigError(fmt::format("{} frequencies given for {} activities", c.frequencies_hz.size(), c.activities));
    }
    const double finite[] = {c.amplitude_lo, c.amplitude_hi, c.phase_lo, c.phase_hi, c.bias_lo,
                             c.bias_hi,      c.noise_std,    c.sample_rate_hz};
    for (double v : finite) {
        if (!std::isfinite(v)) throw ConfigError("synthetic config ranges must be finite");
    }
    for (double f : c.frequencies_hz) {
        if (!std::isfinite(f)) throw ConfigError("synthetic frequencies must be finite");
    }
    if (c.amplitude_lo > c.amplitude_hi || c.phase_lo > c.phase_hi || c.bias_lo > c.bias_hi) {
        throw ConfigError("synthetic ranges must satisfy lo <= hi");
    }
    if (c.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    if (!(c.sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be positive");
}

json to_json(const SynthConfig& c) {
    return {
        {"subjects", c.subjects},
        {"activities", c.activities},
        {"segments_per_activity", c.segments_per_activity},
        {"window", c.window},
        {"channels", c.channels},
        {"frequencies_hz", c.frequencies_hz},
        {"amplitude_range", {c.amplitude_lo, c.amplitude_hi}},
        {"phase_range", {c.phase_lo, c.phase_hi}},
        {"bias_range", {c.bias_lo, c.bias_hi}},
        {"noise_std", c.noise_std},
        {"sample_rate_hz", c.sample_rate_hz},
        {"seed", c.seed},
    };
}

void merge_synth_config(const json& j, SynthConfig& c) {
    if (!j.is_object()) throw ConfigError("synthetic config must be a JSON object");
    auto pair = [&](const std::string& key, double& lo, double& hi) {
        std::vector<double> v;
        try {
            v = j.at(key).get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
        }
        if (v.size() != 2) throw ConfigError(fmt::format("config key '{}' needs two values", key));
        lo = v[0];
        hi = v[1];
    };
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "subjects") c.subjects = value.get<int>();
            else if (key == "activities") c.activities = value.get<int>();
            else if (key == "segments_per_activity") c.segments_per_activity = value.get<int>();
            else if (key == "window") c.window = value.get<int>();
            else if (key == "channels") c.channels = value.get<int>();
            else if (key == "frequencies_hz") c.frequencies_hz = value.get<std::vector<double>>();
            else if (key == "amplitude_range") pair(key, c.amplitude_lo, c.amplitude_hi);
            else if (key == "phase_range") pair(key, c.phase_lo, c.phase_hi);
            else if (key == "bias_range") pair(key, c.bias_lo, c.bias_hi);
            else if (key == "noise_std") c.noise_std = value.get<double>();
            else if (key == "sample_rate_hz") c.sample_rate_hz = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw ConfigError(fmt::format("unknown config key '{}'", key));
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
        }
    }
}

std::string synth_subject_id(int index, int count) {
    int digits = 2;
    for (int n = count; n >= 100; n /= 10) ++digits;
    return fmt::format("s{:0{}d}", index + 1, digits);
}

Dataset synth_generate(const SynthConfig& c) {
    validate(c);
    Rng rng(c.seed);
    struct Transform {
        double amplitude, phase, bias;
    };
    std::vector<Transform> transforms;
    for (int s = 0; s < c.subjects; ++s) {
        Transform t{};
        t.amplitude = uniform(rng, c.amplitude_lo, c.amplitude_hi);
        t.phase = uniform(rng, c.phase_lo, c.phase_hi);
        t.bias = uniform(rng, c.bias_lo, c.bias_hi);
        transforms.push_back(t);
    }

    Dataset d;
    d.name = "synth";
    d.sample_rate_hz = c.sample_rate_hz;
    std::vector<std::string> names;
    for (int m = 0; m < c.activities; ++m) names.push_back(fmt::format("activity{}", m));
    d.labels = make_label_set(names);

    constexpr double kTwoPi = 6.283185307179586;
    constexpr double kPi = 3.141592653589793;
    const auto w = static_cast<std::size_t>(c.window);
    const auto channels = static_cast<std::size_t>(c.channels);
    std::uint64_t uid = 0;
    for (int s = 0; s < c.subjects; ++s) {
        const auto& tr = transforms[static_cast<std::size_t>(s)];
        const auto subject = synth_subject_id(s, c.subjects);
        d.subjects.push_back(subject);
        for (int m = 0; m < c.activities; ++m) {
            const double f = c.frequencies_hz[static_cast<std::size_t>(m)];
            for (int k = 0; k < c.segments_per_activity; ++k) {
                Tensor ch({channels, w});
                for (std::size_t i = 0; i < w; ++i) {
                    const double t = static_cast<double>(static_cast<std::size_t>(k) * w + i) / c.sample_rate_hz;
                    for (std::size_t ci = 0; ci < channels; ++ci) {
                        double v = tr.amplitude * std::sin(kTwoPi * f * t + tr.phase + static_cast<double>(ci) * kPi / 6.0) +
                                   tr.bias;
                        if (c.noise_std > 0.0) v += c.noise_std * standard_normal(rng);
                        ch.at(ci, i) = v;
                    }
                }
                d.segments.push_back({std::move(ch), m, subject, static_cast<std::size_t>(k) * w, uid++});
            }
        }
    }
    std::sort(d.subjects.begin(), d.subjects.end());
    return d;
}

// --- CSV directory -------------------------------------------------------

void write_csv_dataset(const Dataset& d, const fs::path& dir, const json& extra_manifest) {
    if (d.channels() != 3) {
        throw ConfigError(fmt::format("CSV datasets hold 3 axes per sample; dataset has {} channels", d.channels()));
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
    const double period_ns = 1e9 / d.sample_rate_hz;
    json files = json::array();
    std::size_t samples = 0;
    for (const auto& subject : d.subjects) {
        const auto name = subject + ".csv";
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write '{}'", (dir / name).string()));
        out << kCsvHeader << '\n';
        for (const auto& s : d.segments) {
            if (s.subject_id != subject) continue;
            for (std::size_t t = 0; t < s.window(); ++t) {
                const auto idx = s.origin_index + t;
                const auto ts = static_cast<std::int64_t>(std::llround(static_cast<double>(idx) * period_ns));
                out << fmt::format("{},{},{},{},{},{}\n", subject, d.labels[static_cast<std::size_t>(s.label)].name, ts,
                                   s.channels.at(0, t), s.channels.at(1, t), s.channels.at(2, t));
                ++samples;
            }
        }
        if (!out) throw IoError(fmt::format("failed writing '{}'", (dir / name).string()));
        files.push_back(name);
    }
    json manifest = {
        {"format", "har-csv"},
        {"name", d.name},
        {"sample_rate_hz", d.sample_rate_hz},
        {"window", d.window()},
        {"stride", d.window()},
        {"activities", d.label_names()},
        {"subjects", d.subjects},
        {"files", files},
        {"counts", {{"subjects", d.subjects.size()}, {"segments", d.segments.size()}, {"samples", samples}}},
    };
    for (const auto& [k, v] : extra_manifest.items()) manifest[k] = v;
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", (dir / "manifest.json").string()));
    out << manifest.dump(2) << '\n';
}

Dataset load_csv_dataset(const fs::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream min(manifest_path);
    if (!min) throw IoError(fmt::format("cannot open '{}'", manifest_path.string()));
    json manifest;
    std::vector<std::string> activities;
    std::vector<std::string> file_names;
    std::size_t window = 0;
    std::size_t stride = 0;
    Dataset d;
    try {
        manifest = json::parse(min);
        activities = manifest.at("activities").get<std::vector<std::string>>();
        file_names = manifest.at("files").get<std::vector<std::string>>();
        window = manifest.at("window").get<std::size_t>();
        stride = manifest.at("stride").get<std::size_t>();
        d.name = manifest.at("name").get<std::string>();
        d.sample_rate_hz = manifest.at("sample_rate_hz").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("bad manifest '{}': {}", manifest_path.string(), e.what()));
    }
    d.labels = make_label_set(activities);

    std::vector<RawSample> samples;
    for (const auto& name : file_names) {
        const auto path = dir / name;
        std::ifstream in(path);
        if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
        std::string line;
        std::size_t lineno = 0;
        if (!std::getline(in, line) || trim(line) != kCsvHeader) {
            throw FormatError(fmt::format("'{}' does not start with header '{}'", path.string(), kCsvHeader));
        }
        ++lineno;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            const auto f = split(trim(line), ',');
            const auto where = fmt::format("'{}' line {}", path.string(), lineno);
            if (f.size() != 6) throw FormatError(fmt::format("{}: expected 6 fields, got {}", where, f.size()));
            RawSample s;
            s.subject_id = std::string(f[0]);
            s.activity = label_index(activities, f[1]);
            if (s.activity < 0) throw FormatError(fmt::format("{}: unknown activity '{}'", where, std::string(f[1])));
            if (!parse_number(f[2], s.timestamp_ns)) throw FormatError(fmt::format("{}: bad timestamp", where));
            s.ax = parse_double_or_throw(f[3], where);
            s.ay = parse_double_or_throw(f[4], where);
            s.az = parse_double_or_throw(f[5], where);
            samples.push_back(std::move(s));
        }
    }
    d.segments = segment_runs(samples, window, stride, nullptr);
    d.subjects = subjects_of(d.segments);
    return d;
}

}  // namespace har
