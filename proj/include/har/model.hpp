#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "har/layers.hpp"
#include "har/optim.hpp"
#include "har/random.hpp"
#include "har/signal.hpp"
#include "har/tensor.hpp"

namespace har {

/// conv -> ReLU -> max-pool -> dropout.
struct ConvBlockConfig {
    int filters = 32;
    int kernel = 5;
    int pool = 2;
    double dropout = 0.5;

    bool operator==(const ConvBlockConfig&) const = default;
};

struct NetworkConfig {
    int channels = 3;
    int window = 200;
    int bins = 64;
    int embed_dim = 8;
    int smooth_width = 3;
    std::vector<ConvBlockConfig> blocks{{32, 5, 2, 0.5}, {64, 5, 2, 0.5}};
    int classes = 6;
    PercentileClip clip{1.0, 99.0};
    AdamOptions optimizer;
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 1;
    /// Placeholder input range used before the discretizer is fitted.
    double clip_bound = 20.0;
};

/// Throws ConfigError describing the first violated constraint; for a block
/// that shrinks the signal to nothing the message names that block.
void validate(const NetworkConfig& config);

/// Signal length at the input and after every conv and pool stage, e.g.
/// 200 -> 196 -> 98 -> 94 -> 47 for the default two-block network.
std::vector<std::size_t> internal_lengths(const NetworkConfig& config);

/// Length of the flattened vector fed to the classification layer.
std::size_t classifier_inputs(const NetworkConfig& config);

/// Parameter shapes in model order: embedding, per-block kernels and bias,
/// classifier weight and bias.
std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkConfig& config);

inline constexpr std::string_view kEmbeddingName = "embedding";
inline constexpr std::string_view kClassifierWeightName = "classifier.weight";
inline constexpr std::string_view kClassifierBiasName = "classifier.bias";
std::string conv_kernels_name(std::size_t block);
std::string conv_bias_name(std::size_t block);

bool is_classifier_parameter(std::string_view name);

struct TrainedModel {
    NetworkConfig config;
    std::vector<Parameter> parameters;
    DiscretizerSpec discretizer;
    std::vector<ActivityLabel> labels;

    Parameter& param(std::string_view name);
    const Parameter& param(std::string_view name) const;
};

/// Glorot-uniform embedding and kernels, zero biases, zero classifier. The
/// discretizer starts with placeholder ranges [-clip_bound, clip_bound].
/// Empty `label_names` produce "class0".."classM-1".
TrainedModel build_network(const NetworkConfig& config, Rng& rng,
                           std::vector<std::string> label_names = {});

/// Smoothing applied to every segment before discretization.
Tensor preprocess(const TrainedModel& model, const SegmentTensor& segment);

/// Fits the model's discretizer to the preprocessed training segments.
void fit_input_ranges(TrainedModel& model, std::span<const SegmentTensor> segments);

struct BlockTrace {
    Tensor input;
    Tensor conv;
    Tensor activated;
    Tensor pooled;
    std::vector<double> mask;
};

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
    std::vector<std::vector<int>> ids;
    std::vector<BlockTrace> blocks;
    Tensor features;
    Tensor logits;
};

ForwardTrace forward_trace(const TrainedModel& model, const SegmentTensor& segment, Mode mode, Rng& rng);

/// Class scores. Eval mode does not touch `rng`.
Tensor forward(const TrainedModel& model, const SegmentTensor& segment, Mode mode, Rng& rng);
Tensor forward(const TrainedModel& model, const SegmentTensor& segment);

/// Adds d(loss)/d(param) into the grad buffer of every trainable parameter
/// (buffers must already exist). Stops descending once no trainable
/// parameter remains below the current layer.
void backward(TrainedModel& model, const ForwardTrace& trace, const Tensor& logit_grad);

/// Argmax of eval-mode scores; ties go to the lowest class index.
int predict(const TrainedModel& model, const SegmentTensor& segment);
int argmax(std::span<const double> scores);

struct TrainOptions {
    int epochs = 50;
    int batch_size = 32;
    AdamOptions optimizer;
    std::uint64_t seed = 1;
};

TrainOptions train_options(const NetworkConfig& config);

struct TrainHistory {
    /// Mean eval-mode loss over the training set before any update.
    double initial_loss = 0.0;
    /// Mean per-sample training loss of each epoch.
    std::vector<double> epoch_loss;
};

/// Mini-batch Adam on softmax cross-entropy. Segments are put in a canonical
/// order before the seeded shuffle, so the result does not depend on the
/// order of `segments`. Fits the discretizer first if it is still a
/// placeholder. Frozen parameters are never modified.
TrainHistory train(TrainedModel& model, std::span<const SegmentTensor> segments, const TrainOptions& options);

/// Indices of `segments` in canonical order (subject, label, origin, uid, values).
std::vector<std::size_t> canonical_order(std::span<const SegmentTensor> segments);

}  // namespace har
