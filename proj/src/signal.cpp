#include "har/signal.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "har/error.hpp"

namespace har {

std::vector<ActivityLabel> make_label_set(const std::vector<std::string>& names) {
    std::set<std::string> seen;
    std::vector<ActivityLabel> labels;
    labels.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!seen.insert(names[i]).second) {
            throw DataError(fmt::format("duplicate activity name '{}'", names[i]));
        }
        labels.push_back({static_cast<int>(i), names[i]});
    }
    return labels;
}

std::vector<double> smooth(std::span<const double> channel, std::size_t width) {
    const std::size_t n = channel.size();
    if (width == 0 || width % 2 == 0) {
        throw ParameterError(fmt::format("smoothing width must be odd and positive, got {}", width));
    }
    if (width > n) {
        throw ParameterError(fmt::format("smoothing width {} exceeds sequence length {}", width, n));
    }
    std::vector<double> out(n);
    if (width == 1) {
        std::copy(channel.begin(), channel.end(), out.begin());
        return out;
    }
    const auto half = static_cast<std::ptrdiff_t>(width / 2);
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    for (std::ptrdiff_t i = 0; i <= last; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t j = i - half; j <= i + half; ++j) {
            acc += channel[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, last))];
        }
        out[static_cast<std::size_t>(i)] = acc / static_cast<double>(width);
    }
    return out;
}

Tensor smooth_channels(const Tensor& channels, std::size_t width) {
    if (width == 1) return channels;
    Tensor out(channels.shape());
    for (std::size_t c = 0; c < channels.dim(0); ++c) {
        auto s = smooth(channels.row(c), width);
        std::copy(s.begin(), s.end(), out.row(c).begin());
    }
    return out;
}

std::vector<SegmentTensor> segment(std::span<const RawSample> stream, std::size_t window,
                                   std::size_t stride) {
    if (window == 0 || stride == 0) {
        throw ParameterError(fmt::format("window ({}) and stride ({}) must be >= 1", window, stride));
    }
    std::vector<SegmentTensor> out;
    const std::size_t count = segment_count(stream.size(), window, stride);
    if (count == 0) return out;
    for (const auto& s : stream) {
        if (s.subject_id != stream.front().subject_id || s.activity != stream.front().activity) {
            throw DataError("segment: stream mixes subjects or activities");
        }
    }
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = i * stride;
        Tensor ch({3, window});
        for (std::size_t t = 0; t < window; ++t) {
            const auto& s = stream[start + t];
            ch.at(0, t) = s.ax;
            ch.at(1, t) = s.ay;
            ch.at(2, t) = s.az;
        }
        out.push_back({std::move(ch), stream.front().activity, stream.front().subject_id, start, 0});
    }
    return out;
}

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw DataError("percentile of empty data");
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

DiscretizerSpec fit_discretizer(std::span<const Tensor> training, int bins, PercentileClip clip) {
    if (training.empty()) throw DataError("fit_discretizer: no training segments");
    if (bins < 2) throw ParameterError(fmt::format("bin count must be >= 2, got {}", bins));
    if (!(clip.low >= 0.0 && clip.low < clip.high && clip.high <= 100.0)) {
        throw ParameterError(
            fmt::format("clip percentiles must satisfy 0 <= low < high <= 100, got ({}, {})", clip.low, clip.high));
    }
    const std::size_t channels = training.front().dim(0);
    for (const auto& t : training) {
        if (t.rank() != 2 || t.dim(0) != channels) {
            throw DimensionError(fmt::format("fit_discretizer: segment {} does not have {} channels",
                                             shape_string(t.shape()), channels));
        }
    }
    DiscretizerSpec spec;
    spec.bins = bins;
    spec.fitted = true;
    spec.lo.resize(channels);
    spec.hi.resize(channels);
    std::vector<double> values;
    for (std::size_t c = 0; c < channels; ++c) {
        values.clear();
        for (const auto& t : training) {
            auto r = t.row(c);
            values.insert(values.end(), r.begin(), r.end());
        }
        std::sort(values.begin(), values.end());
        double lo = percentile_sorted(values, clip.low);
        double hi = percentile_sorted(values, clip.high);
        if (!(lo < hi)) {
            spdlog::warn("discretizer channel {} is degenerate (value {}); widening range", c, lo);
            const double v = lo;
            lo = v - 1e-6;
            hi = v + 1e-6;
        }
        spec.lo[c] = lo;
        spec.hi[c] = hi;
    }
    return spec;
}

int discretize_value(double v, double lo, double hi, int bins) {
    const double x = std::floor((v - lo) / (hi - lo) * static_cast<double>(bins));
    if (!(x >= 0.0)) return 0;  // also maps NaN to the first bin
    if (x >= static_cast<double>(bins - 1)) return bins - 1;
    return static_cast<int>(x);
}

std::vector<std::vector<int>> discretize(const Tensor& channels, const DiscretizerSpec& spec) {
    if (channels.rank() != 2 || channels.dim(0) != spec.channels() || spec.hi.size() != spec.lo.size()) {
        throw DimensionError(fmt::format("discretize: segment {} does not match {} fitted channels",
                                         shape_string(channels.shape()), spec.channels()));
    }
    std::vector<std::vector<int>> ids(channels.dim(0));
    for (std::size_t c = 0; c < channels.dim(0); ++c) {
        auto r = channels.row(c);
        ids[c].resize(r.size());
        for (std::size_t t = 0; t < r.size(); ++t) {
            ids[c][t] = discretize_value(r[t], spec.lo[c], spec.hi[c], spec.bins);
        }
    }
    return ids;
}

SegmentTensor stack_channels(std::span<const SegmentTensor> units) {
    if (units.empty()) throw DimensionError("stack_channels: no units");
    const std::size_t w = units.front().window();
    for (std::size_t u = 0; u < units.size(); ++u) {
        if (units[u].channels.rank() != 2 || units[u].num_channels() != 3) {
            throw DimensionError(fmt::format("stack_channels: unit {} has {} channels, expected 3", u,
                                             units[u].num_channels()));
        }
        if (units[u].window() != w) {
            throw DimensionError(fmt::format("stack_channels: unit {} window {} differs from {}", u,
                                             units[u].window(), w));
        }
    }
    Tensor ch({3 * units.size(), w});
    for (std::size_t u = 0; u < units.size(); ++u) {
        for (std::size_t a = 0; a < 3; ++a) {
            auto src = units[u].channels.row(a);
            std::copy(src.begin(), src.end(), ch.row(stacked_channel_index(u, a)).begin());
        }
    }
    const auto& first = units.front();
    return {std::move(ch), first.label, first.subject_id, first.origin_index, first.uid};
}

}  // namespace har
