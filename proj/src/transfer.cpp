#include "har/transfer.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "har/error.hpp"
#include "har/random.hpp"

namespace har {

void freeze_all_but_classifier(TrainedModel& model) {
    for (auto& p : model.parameters) p.frozen = !is_classifier_parameter(p.name);
}

TransferSplit sample_transfer_instances(std::span<const SegmentTensor> target, int classes, int k,
                                        std::uint64_t seed, const std::vector<ActivityLabel>& labels) {
    if (k < 1) throw ParameterError(fmt::format("k must be >= 1, got {}", k));
    if (classes < 1) throw ParameterError("class count must be >= 1");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < target.size(); ++i) {
        const int l = target[i].label;
        if (l < 0 || l >= classes) throw DataError(fmt::format("segment label {} outside [0, {})", l, classes));
        by_class[static_cast<std::size_t>(l)].push_back(i);
    }
    std::vector<std::string> deficient;
    for (int c = 0; c < classes; ++c) {
        const auto n = by_class[static_cast<std::size_t>(c)].size();
        if (n < static_cast<std::size_t>(k)) {
            const auto name = static_cast<std::size_t>(c) < labels.size() ? labels[static_cast<std::size_t>(c)].name
                                                                          : fmt::format("class{}", c);
            deficient.push_back(fmt::format("{} ({} segments)", name, n));
        }
    }
    if (!deficient.empty()) {
        throw DataError(fmt::format("fewer than k={} target segments for: {}", k, fmt::join(deficient, ", ")));
    }

    Rng rng(seed);
    std::vector<bool> chosen(target.size(), false);
    for (auto& idx : by_class) {
        // partial Fisher-Yates: the first k slots become the sample
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
            const std::size_t remaining = idx.size() - i;
            const auto j = i + std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(remaining)),
                                        remaining - 1);
            std::swap(idx[i], idx[j]);
        }
        std::sort(idx.begin(), idx.begin() + k);
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) chosen[idx[i]] = true;
    }
    TransferSplit split;
    for (const auto& idx : by_class) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) split.transfer.push_back(target[idx[i]]);
    }
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (!chosen[i]) split.holdout.push_back(target[i]);
    }
    return split;
}

TrainedModel fine_tune(const TrainedModel& source, const TransferSplit& split, const TransferSpec& spec,
                       TrainHistory* history) {
    if (spec.epochs < 0) throw ConfigError(fmt::format("fine-tune epochs must be >= 0, got {}", spec.epochs));
    if (!(spec.learning_rate > 0.0)) throw ConfigError("fine-tune learning rate must be positive");
    for (const auto& p : source.parameters) {
        if (p.frozen == is_classifier_parameter(p.name)) {
            throw ContractError(fmt::format(
                "fine_tune: parameter '{}' is {}; call freeze_all_but_classifier first", p.name,
                p.frozen ? "frozen" : "trainable"));
        }
    }
    if (!source.discretizer.fitted) {
        throw ContractError("fine_tune: source model has no fitted input ranges");
    }
    TrainedModel tuned = source;
    if (spec.epochs == 0) {
        if (history) *history = {};
        return tuned;
    }
    TrainOptions opts = train_options(source.config);
    opts.epochs = spec.epochs;
    opts.optimizer.learning_rate = spec.learning_rate;
    opts.seed = spec.seed;
    auto h = train(tuned, split.transfer, opts);
    if (history) *history = std::move(h);
    return tuned;
}

}  // namespace har
