#include "har/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "har/error.hpp"

namespace har {

std::string conv_kernels_name(std::size_t block) { return fmt::format("conv{}.kernels", block); }
std::string conv_bias_name(std::size_t block) { return fmt::format("conv{}.bias", block); }

bool is_classifier_parameter(std::string_view name) {
    return name == kClassifierWeightName || name == kClassifierBiasName;
}

void validate(const NetworkConfig& c) {
    if (c.channels < 1) throw ConfigError(fmt::format("channels must be >= 1, got {}", c.channels));
    if (c.window < 1) throw ConfigError(fmt::format("window must be >= 1, got {}", c.window));
    if (c.bins < 2) throw ConfigError(fmt::format("bins must be >= 2, got {}", c.bins));
    if (c.embed_dim < 1) throw ConfigError(fmt::format("embed_dim must be >= 1, got {}", c.embed_dim));
    if (c.classes < 2) throw ConfigError(fmt::format("classes must be >= 2, got {}", c.classes));
    if (c.smooth_width < 1 || c.smooth_width % 2 == 0 || c.smooth_width > c.window) {
        throw ConfigError(fmt::format("smooth_width must be odd and in [1, window], got {}", c.smooth_width));
    }
    if (c.epochs < 0) throw ConfigError(fmt::format("epochs must be >= 0, got {}", c.epochs));
    if (c.batch_size < 1) throw ConfigError(fmt::format("batch_size must be >= 1, got {}", c.batch_size));
    if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(c.clip.low >= 0.0 && c.clip.low < c.clip.high && c.clip.high <= 100.0)) {
        throw ConfigError(fmt::format("clip percentiles must satisfy 0 <= low < high <= 100, got ({}, {})",
                                      c.clip.low, c.clip.high));
    }
    if (!(c.clip_bound > 0.0)) throw ConfigError("clip_bound must be positive");
    if (c.blocks.empty()) throw ConfigError("network needs at least one conv block");
    long len = c.window;
    for (std::size_t i = 0; i < c.blocks.size(); ++i) {
        const auto& b = c.blocks[i];
        if (b.filters < 1 || b.kernel < 1 || b.pool < 1) {
            throw ConfigError(fmt::format("conv block {}: filters, kernel and pool must be >= 1", i));
        }
        if (!(b.dropout >= 0.0 && b.dropout < 1.0)) {
            throw ConfigError(fmt::format("conv block {}: dropout must be in [0, 1), got {}", i, b.dropout));
        }
        len = len - b.kernel + 1;
        if (len < 1) {
            throw ConfigError(fmt::format("conv block {}: kernel {} leaves no samples of the {}-sample input",
                                          i, b.kernel, c.window));
        }
        len /= b.pool;
        if (len < 1) {
            throw ConfigError(fmt::format("conv block {}: pool {} leaves no samples of the {}-sample input", i,
                                          b.pool, c.window));
        }
    }
}

std::vector<std::size_t> internal_lengths(const NetworkConfig& c) {
    validate(c);
    std::vector<std::size_t> lengths{static_cast<std::size_t>(c.window)};
    std::size_t len = static_cast<std::size_t>(c.window);
    for (const auto& b : c.blocks) {
        len = len - static_cast<std::size_t>(b.kernel) + 1;
        lengths.push_back(len);
        len /= static_cast<std::size_t>(b.pool);
        lengths.push_back(len);
    }
    return lengths;
}

std::size_t classifier_inputs(const NetworkConfig& c) {
    return internal_lengths(c).back() * static_cast<std::size_t>(c.blocks.back().filters);
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkConfig& c) {
    validate(c);
    const auto b = static_cast<std::size_t>(c.bins);
    const auto e = static_cast<std::size_t>(c.embed_dim);
    std::vector<std::pair<std::string, Shape>> layout;
    layout.emplace_back(std::string(kEmbeddingName), Shape{b, e});
    std::size_t in = static_cast<std::size_t>(c.channels) * e;
    for (std::size_t i = 0; i < c.blocks.size(); ++i) {
        const auto f = static_cast<std::size_t>(c.blocks[i].filters);
        layout.emplace_back(conv_kernels_name(i), Shape{f, in, static_cast<std::size_t>(c.blocks[i].kernel)});
        layout.emplace_back(conv_bias_name(i), Shape{f});
        in = f;
    }
    const auto m = static_cast<std::size_t>(c.classes);
    layout.emplace_back(std::string(kClassifierWeightName), Shape{m, classifier_inputs(c)});
    layout.emplace_back(std::string(kClassifierBiasName), Shape{m});
    return layout;
}

Parameter& TrainedModel::param(std::string_view name) {
    for (auto& p : parameters) {
        if (p.name == name) return p;
    }
    throw ContractError(fmt::format("model has no parameter '{}'", name));
}

const Parameter& TrainedModel::param(std::string_view name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return p;
    }
    throw ContractError(fmt::format("model has no parameter '{}'", name));
}

TrainedModel build_network(const NetworkConfig& config, Rng& rng, std::vector<std::string> label_names) {
    validate(config);
    if (label_names.empty()) {
        for (int i = 0; i < config.classes; ++i) label_names.push_back(fmt::format("class{}", i));
    }
    if (label_names.size() != static_cast<std::size_t>(config.classes)) {
        throw ConfigError(fmt::format("{} label names given for {} classes", label_names.size(), config.classes));
    }
    TrainedModel model;
    model.config = config;
    model.labels = make_label_set(label_names);
    model.discretizer.bins = config.bins;
    model.discretizer.lo.assign(static_cast<std::size_t>(config.channels), -config.clip_bound);
    model.discretizer.hi.assign(static_cast<std::size_t>(config.channels), config.clip_bound);
    model.discretizer.fitted = false;

    for (auto& [name, shape] : parameter_layout(config)) {
        Tensor t(shape);
        double fan_in = 0.0;
        double fan_out = 0.0;
        if (name == kEmbeddingName) {
            fan_in = static_cast<double>(shape[0]);
            fan_out = static_cast<double>(shape[1]);
        } else if (shape.size() == 3) {
            fan_in = static_cast<double>(shape[1] * shape[2]);
            fan_out = static_cast<double>(shape[0] * shape[2]);
        }
        if (fan_in > 0.0) {
            const double a = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& v : t.values()) v = uniform(rng, -a, a);
        }
        model.parameters.push_back({name, std::move(t), false});
    }
    return model;
}

Tensor preprocess(const TrainedModel& model, const SegmentTensor& segment) {
    const auto& c = model.config;
    if (segment.channels.rank() != 2 || segment.num_channels() != static_cast<std::size_t>(c.channels) ||
        segment.window() != static_cast<std::size_t>(c.window)) {
        throw DimensionError(fmt::format("segment {} does not match the network input [{} x {}]",
                                         shape_string(segment.channels.shape()), c.channels, c.window));
    }
    return smooth_channels(segment.channels, static_cast<std::size_t>(c.smooth_width));
}

void fit_input_ranges(TrainedModel& model, std::span<const SegmentTensor> segments) {
    std::vector<Tensor> smoothed;
    smoothed.reserve(segments.size());
    for (const auto& s : segments) smoothed.push_back(preprocess(model, s));
    model.discretizer = fit_discretizer(smoothed, model.config.bins, model.config.clip);
}

namespace {

struct BlockView {
    const Tensor* kernels;
    const Tensor* bias;
};

std::vector<BlockView> block_views(const TrainedModel& model) {
    std::vector<BlockView> views;
    // parameters are stored in layout order: embedding, (kernels, bias)*, W, b
    for (std::size_t i = 0; i < model.config.blocks.size(); ++i) {
        views.push_back({&model.parameters[1 + 2 * i].tensor, &model.parameters[2 + 2 * i].tensor});
    }
    return views;
}

}  // namespace

ForwardTrace forward_trace(const TrainedModel& model, const SegmentTensor& segment, Mode mode, Rng& rng) {
    const auto& c = model.config;
    ForwardTrace trace;
    trace.ids = discretize(preprocess(model, segment), model.discretizer);

    const Tensor& table = model.parameters.front().tensor;
    const auto e = static_cast<std::size_t>(c.embed_dim);
    const auto w = static_cast<std::size_t>(c.window);
    Tensor x({static_cast<std::size_t>(c.channels) * e, w});
    for (std::size_t ch = 0; ch < trace.ids.size(); ++ch) {
        Tensor emb = embedding_forward(trace.ids[ch], table);
        std::copy(emb.values().begin(), emb.values().end(), x.values().begin() + static_cast<std::ptrdiff_t>(ch * e * w));
    }

    const auto views = block_views(model);
    trace.blocks.reserve(c.blocks.size());
    for (std::size_t i = 0; i < c.blocks.size(); ++i) {
        BlockTrace bt;
        bt.input = std::move(x);
        bt.conv = conv1d_forward(bt.input, *views[i].kernels, *views[i].bias);
        bt.activated = relu_forward(bt.conv);
        bt.pooled = maxpool1d_forward(bt.activated, static_cast<std::size_t>(c.blocks[i].pool));
        auto dropped = dropout_forward(bt.pooled, c.blocks[i].dropout, mode, rng);
        bt.mask = std::move(dropped.mask);
        x = std::move(dropped.output);
        trace.blocks.push_back(std::move(bt));
    }
    trace.features = x.reshaped({x.size()});
    trace.logits = dense_forward(trace.features, model.param(kClassifierWeightName).tensor,
                                 model.param(kClassifierBiasName).tensor);
    return trace;
}

Tensor forward(const TrainedModel& model, const SegmentTensor& segment, Mode mode, Rng& rng) {
    return forward_trace(model, segment, mode, rng).logits;
}

Tensor forward(const TrainedModel& model, const SegmentTensor& segment) {
    Rng unused(0);
    return forward(model, segment, Mode::Eval, unused);
}

void backward(TrainedModel& model, const ForwardTrace& trace, const Tensor& logit_grad) {
    const auto& c = model.config;
    const std::size_t nblocks = c.blocks.size();
    // trainable_below[i]: some parameter in layer < i is trainable, where
    // layer 0 is the embedding and layer 1+j is conv block j.
    std::vector<bool> trainable_below(nblocks + 2, false);
    {
        bool any = false;
        for (std::size_t layer = 0; layer <= nblocks + 1; ++layer) {
            trainable_below[layer] = any;
            if (layer == 0) {
                any = any || !model.parameters[0].frozen;
            } else if (layer <= nblocks) {
                any = any || !model.parameters[2 * layer - 1].frozen || !model.parameters[2 * layer].frozen;
            }
        }
    }

    auto accumulate = [](Parameter& p, const Tensor& g) {
        if (p.frozen) return;
        auto& dst = p.tensor.grad();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    };

    auto& w = model.param(kClassifierWeightName);
    auto& b = model.param(kClassifierBiasName);
    const bool need_features = trainable_below[nblocks + 1];
    auto dg = dense_backward(trace.features, w.tensor, logit_grad, need_features);
    accumulate(w, dg.weight);
    accumulate(b, dg.bias);
    if (!need_features) return;

    Tensor up = dg.input.reshaped(trace.blocks.back().pooled.shape());
    for (std::size_t i = nblocks; i-- > 0;) {
        const auto& bt = trace.blocks[i];
        Tensor g = dropout_backward(bt.mask, up);
        g = maxpool1d_backward(bt.activated, static_cast<std::size_t>(c.blocks[i].pool), g);
        g = relu_backward(bt.conv, g);
        auto& kp = model.parameters[1 + 2 * i];
        auto& bp = model.parameters[2 + 2 * i];
        const bool need_input = trainable_below[i + 1];
        auto cg = conv1d_backward(bt.input, kp.tensor, g, need_input);
        accumulate(kp, cg.kernels);
        accumulate(bp, cg.bias);
        if (!need_input) return;
        up = std::move(cg.input);
    }

    auto& table = model.parameters[0];
    if (table.frozen) return;
    const auto e = static_cast<std::size_t>(c.embed_dim);
    const auto len = static_cast<std::size_t>(c.window);
    Tensor tg(table.tensor.shape());
    for (std::size_t ch = 0; ch < trace.ids.size(); ++ch) {
        std::vector<double> slice(up.values().begin() + static_cast<std::ptrdiff_t>(ch * e * len),
                                  up.values().begin() + static_cast<std::ptrdiff_t>((ch + 1) * e * len));
        embedding_backward(trace.ids[ch], Tensor({e, len}, std::move(slice)), tg);
    }
    accumulate(table, tg);
}

int argmax(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return static_cast<int>(best);
}

int predict(const TrainedModel& model, const SegmentTensor& segment) {
    return argmax(forward(model, segment).values());
}

TrainOptions train_options(const NetworkConfig& config) {
    return {config.epochs, config.batch_size, config.optimizer, config.seed};
}

std::vector<std::size_t> canonical_order(std::span<const SegmentTensor> segments) {
    std::vector<std::size_t> order(segments.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = segments[a];
        const auto& y = segments[b];
        if (x.subject_id != y.subject_id) return x.subject_id < y.subject_id;
        if (x.label != y.label) return x.label < y.label;
        if (x.origin_index != y.origin_index) return x.origin_index < y.origin_index;
        if (x.uid != y.uid) return x.uid < y.uid;
        const auto xv = x.channels.values();
        const auto yv = y.channels.values();
        return std::lexicographical_compare(xv.begin(), xv.end(), yv.begin(), yv.end());
    });
    return order;
}

TrainHistory train(TrainedModel& model, std::span<const SegmentTensor> segments, const TrainOptions& options) {
    if (options.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const int m = model.config.classes;
    std::vector<std::size_t> per_class(static_cast<std::size_t>(m), 0);
    for (const auto& s : segments) {
        if (s.label < 0 || s.label >= m) {
            throw DataError(fmt::format("segment label {} outside the model's {} classes", s.label, m));
        }
        per_class[static_cast<std::size_t>(s.label)] += 1;
    }
    std::vector<std::string> missing;
    for (int k = 0; k < m; ++k) {
        if (per_class[static_cast<std::size_t>(k)] == 0) missing.push_back(model.labels[static_cast<std::size_t>(k)].name);
    }
    if (!missing.empty()) {
        throw DataError(fmt::format("training data has no segments for: {}", fmt::join(missing, ", ")));
    }

    TrainHistory history;
    if (!model.discretizer.fitted) fit_input_ranges(model, segments);

    const auto order = canonical_order(segments);
    {
        double total = 0.0;
        for (std::size_t i : order) {
            total += softmax_cross_entropy(forward(model, segments[i]), segments[i].label).loss;
        }
        history.initial_loss = total / static_cast<double>(segments.size());
    }
    if (options.epochs == 0) return history;

    Rng rng(options.seed);
    OptimizerState state;
    state.options = options.optimizer;
    std::vector<std::size_t> idx = order;
    const auto batch = static_cast<std::size_t>(options.batch_size);

    for (auto& p : model.parameters) {
        if (p.frozen) p.tensor.drop_grad();
    }
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
            std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
        }
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += batch) {
            const std::size_t end = std::min(start + batch, idx.size());
            for (auto& p : model.parameters) {
                if (!p.frozen) p.tensor.zero_grad();
            }
            for (std::size_t n = start; n < end; ++n) {
                const auto& seg = segments[idx[n]];
                auto trace = forward_trace(model, seg, Mode::Train, rng);
                auto loss = softmax_cross_entropy(trace.logits, seg.label);
                epoch_total += loss.loss;
                backward(model, trace, loss.logit_grad);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& p : model.parameters) {
                if (p.frozen) continue;
                for (double& g : p.tensor.grad()) g *= scale;
            }
            adam_step(model.parameters, state);
        }
        history.epoch_loss.push_back(epoch_total / static_cast<double>(idx.size()));
    }
    for (auto& p : model.parameters) p.tensor.drop_grad();
    return history;
}

}  // namespace har
