#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "har/signal.hpp"

namespace har {

struct Dataset {
    std::string name;
    /// Sorted lexicographically.
    std::vector<std::string> subjects;
    std::vector<ActivityLabel> labels;
    std::vector<SegmentTensor> segments;
    double sample_rate_hz = 20.0;

    int classes() const { return static_cast<int>(labels.size()); }
    std::size_t channels() const;
    std::size_t window() const;
    std::vector<std::string> label_names() const;
    /// Segments of `subject`, in dataset order.
    std::vector<SegmentTensor> segments_of(std::string_view subject) const;
};

/// Checks every Dataset invariant: labels contiguous and unique, segments
/// reference declared subjects/labels, consistent shapes, unique uids,
/// at least two subjects. Throws DataError.
void validate(const Dataset& dataset);

/// Sorted unique subject ids of `segments`.
std::vector<std::string> subjects_of(const std::vector<SegmentTensor>& segments);

// --- WISDM ---------------------------------------------------------------

const std::vector<std::string>& wisdm_activities();

struct WisdmOptions {
    std::size_t window = 200;
    std::size_t stride = 100;
    double clip_bound = 20.0;
    double max_malformed_fraction = 0.10;
};

struct WisdmStats {
    std::size_t records = 0;
    std::size_t malformed = 0;
    std::size_t runs = 0;
};

/// Parses one "user,activity,timestamp,x,y,z" record (a trailing ';' is
/// accepted). Returns nullopt when malformed or the activity is unknown.
std::optional<RawSample> parse_wisdm_record(std::string_view record, double clip_bound = 20.0);
std::string format_wisdm_record(const RawSample& sample);

/// IoError when unreadable; FormatError when more than
/// `max_malformed_fraction` of the records are malformed.
Dataset load_wisdm(const std::filesystem::path& path, const WisdmOptions& options = {},
                   WisdmStats* stats = nullptr);

// --- SDA -----------------------------------------------------------------

/// Column 9u+a for unit u, axis a: accelerometer columns first within each
/// unit's block of nine.
std::vector<std::size_t> sda_default_channel_columns();

struct SdaOptions {
    std::size_t rows = 125;
    std::size_t columns = 45;
    /// Source column for each of the 15 stacked channels (unit u, axis a ->
    /// channel 3u+a). Defaults to 9u+a.
    std::vector<std::size_t> channel_columns = sda_default_channel_columns();
    double sample_rate_hz = 25.0;
};

/// One 125x45 segment file as a 15-channel segment.
SegmentTensor read_sda_segment(const std::filesystem::path& file, const SdaOptions& options = {});

/// Reads root/<activity>/<subject>/<segment>.txt. Activities and subjects
/// are ordered lexicographically by directory name.
Dataset load_sda(const std::filesystem::path& root, const SdaOptions& options = {});

// --- synthetic -----------------------------------------------------------

struct SynthConfig {
    int subjects = 6;
    int activities = 4;
    int segments_per_activity = 30;
    int window = 32;
    int channels = 3;
    std::vector<double> frequencies_hz{1.0, 2.0, 3.0, 4.0};
    double amplitude_lo = 1.0;
    double amplitude_hi = 4.0;
    double phase_lo = 0.0;
    double phase_hi = 6.283185307179586;
    double bias_lo = -1.0;
    double bias_hi = 1.0;
    double noise_std = 0.3;
    double sample_rate_hz = 20.0;
    std::uint64_t seed = 42;
};

void validate(const SynthConfig& config);
nlohmann::json to_json(const SynthConfig& config);
/// Overwrites fields present in `j`; ConfigError on unknown keys.
void merge_synth_config(const nlohmann::json& j, SynthConfig& config);

/// Channel c of activity m for subject s is
///   A_s sin(2 pi f_m t + phi_s + c pi / 6) + b_s + N(0, sigma),
/// with (A_s, phi_s, b_s) drawn per subject. Consecutive non-overlapping
/// windows of one continuous stream per subject-activity.
Dataset synth_generate(const SynthConfig& config);

std::string synth_subject_id(int index, int count);

// --- generic CSV directory -----------------------------------------------

inline constexpr std::string_view kCsvHeader = "subject,activity,timestamp_ns,ax,ay,az";

struct CsvLayout {
    std::size_t window = 0;
    std::size_t stride = 0;
};

/// Writes one CSV per subject plus manifest.json. Only 3-channel datasets
/// whose segments tile their runs (stride == window) can be written.
/// `extra_manifest` entries are merged into the manifest.
void write_csv_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                       const nlohmann::json& extra_manifest = nlohmann::json::object());

/// Reads a directory written by write_csv_dataset.
Dataset load_csv_dataset(const std::filesystem::path& dir);

}  // namespace har
