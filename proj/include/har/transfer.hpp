#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "har/model.hpp"
#include "har/signal.hpp"

namespace har {

struct TransferSpec {
    int k = 3;
    int epochs = 30;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
};

/// Target-subject segments partitioned into the k-per-class fine-tuning set
/// and the evaluation holdout.
struct TransferSplit {
    std::vector<SegmentTensor> transfer;
    std::vector<SegmentTensor> holdout;
};

/// Freezes every parameter except the classification layer, which is
/// unfrozen. Idempotent.
void freeze_all_but_classifier(TrainedModel& model);

/// Uniform draw without replacement of exactly k segments of each of the
/// `classes` activities. Holdout keeps the input order. DataError lists every
/// class with fewer than k segments.
TransferSplit sample_transfer_instances(std::span<const SegmentTensor> target, int classes, int k,
                                        std::uint64_t seed,
                                        const std::vector<ActivityLabel>& labels = {});

/// Retrains the unfrozen parameters of a copy of `source` on the transfer
/// instances with a fresh optimizer. The discretizer ranges of the source
/// are kept.
TrainedModel fine_tune(const TrainedModel& source, const TransferSplit& split, const TransferSpec& spec,
                       TrainHistory* history = nullptr);

}  // namespace har
