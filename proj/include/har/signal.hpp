#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "har/tensor.hpp"

namespace har {

struct ActivityLabel {
    int index = 0;
    std::string name;

    bool operator==(const ActivityLabel&) const = default;
};

/// Builds labels 0..M-1 from names; throws DataError on duplicates.
std::vector<ActivityLabel> make_label_set(const std::vector<std::string>& names);

/// One tri-axial accelerometer reading.
struct RawSample {
    std::string subject_id;
    int activity = 0;
    std::int64_t timestamp_ns = 0;
    double ax = 0.0;
    double ay = 0.0;
    double az = 0.0;

    bool operator==(const RawSample&) const = default;
};

/// A [C x w] window of consecutive samples from one subject performing one
/// activity. Channel 3u+a holds axis a of sensor unit u. `uid` identifies
/// the segment within its dataset.
struct SegmentTensor {
    Tensor channels;
    int label = 0;
    std::string subject_id;
    std::size_t origin_index = 0;
    std::uint64_t uid = 0;

    std::size_t num_channels() const { return channels.dim(0); }
    std::size_t window() const { return channels.dim(1); }
};

/// Centered moving average of odd `width` with edge replication.
std::vector<double> smooth(std::span<const double> channel, std::size_t width);

/// Applies `smooth` to every channel of a [C x w] tensor.
Tensor smooth_channels(const Tensor& channels, std::size_t width);

/// Slides a window of `window` samples with step `stride` over one
/// subject-activity run. Returns an empty vector when the run is shorter
/// than the window. Segment uids are left at 0.
std::vector<SegmentTensor> segment(std::span<const RawSample> stream, std::size_t window,
                                   std::size_t stride);

/// Number of windows `segment` produces for a run of `n` samples.
constexpr std::size_t segment_count(std::size_t n, std::size_t window, std::size_t stride) {
    return n < window ? 0 : (n - window) / stride + 1;
}

/// Per-channel value range plus bin count used to turn values into ids.
/// `fitted` is false for placeholder ranges set before any training data
/// has been seen.
struct DiscretizerSpec {
    int bins = 64;
    std::vector<double> lo;
    std::vector<double> hi;
    bool fitted = false;

    std::size_t channels() const { return lo.size(); }
};

struct PercentileClip {
    double low = 1.0;
    double high = 99.0;
};

/// Linear-interpolated percentile (p in [0, 100]) of sorted data.
double percentile_sorted(std::span<const double> sorted, double p);

/// Fits per-channel ranges to the (low, high) percentiles of every value in
/// `training`. A constant channel v gets [v - 1e-6, v + 1e-6] and a warning.
DiscretizerSpec fit_discretizer(std::span<const Tensor> training, int bins, PercentileClip clip = {});

/// clamp(floor((v - lo) / (hi - lo) * B), 0, B - 1).
int discretize_value(double v, double lo, double hi, int bins);

/// One id sequence per channel.
std::vector<std::vector<int>> discretize(const Tensor& channels, const DiscretizerSpec& spec);

/// Stacks per-unit [3 x w] segments in the given unit order into a [3U x w]
/// segment. Label, subject and origin come from the first unit.
SegmentTensor stack_channels(std::span<const SegmentTensor> units);

constexpr std::size_t stacked_channel_index(std::size_t unit, std::size_t axis) {
    return 3 * unit + axis;
}

}  // namespace har
