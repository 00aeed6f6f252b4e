#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "har/datasets.hpp"
#include "har/model.hpp"
#include "har/transfer.hpp"

namespace har {

inline constexpr std::string_view kVariantTrc = "trc";
inline constexpr std::string_view kVariantFrozenSource = "frozen_source";
inline constexpr std::string_view kVariantLrBaseline = "lr_baseline";

/// Throws ConfigError unless `name` is one of the built-in variants.
std::string check_variant(std::string_view name);

struct Fold {
    std::string test_subject;
    std::vector<std::string> train_subjects;
};

/// One fold per subject in lexicographic order. ProtocolError with fewer
/// than two subjects.
std::vector<Fold> loso_folds(std::vector<std::string> subjects);
std::vector<Fold> loso_folds(const Dataset& dataset);

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    /// confusion[true][predicted]
    std::vector<std::vector<long>> confusion;
    std::size_t count = 0;
};

/// Macro-F1 averages over classes that occur in the labels or the
/// predictions.
Metrics metrics_from_predictions(std::span<const int> labels, std::span<const int> predictions, int classes);

using Predictor = std::function<int(const SegmentTensor&)>;

/// ProtocolError on an empty segment list.
Metrics evaluate(const Predictor& predictor, std::span<const SegmentTensor> segments, int classes);

struct FoldResult {
    std::size_t fold = 0;
    std::string subject;
    std::string variant;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<long>> confusion;
    std::size_t n_train = 0;
    std::size_t n_transfer = 0;
    std::size_t n_test = 0;
};

/// Segment identities used in one (fold, seed) unit.
struct FoldAudit {
    std::size_t fold = 0;
    std::string subject;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> transfer_uids;
    std::vector<std::uint64_t> holdout_uids;
    std::vector<int> transfer_per_class;
    /// Uids each variant was scored on, keyed by variant order.
    std::vector<std::vector<std::uint64_t>> evaluated_uids;
};

struct VariantSummary {
    std::string variant;
    std::size_t rows = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    double std_macro_f1 = 0.0;
};

struct EvalReport {
    std::string dataset;
    std::string config_digest;
    std::vector<FoldResult> rows;
    std::vector<FoldAudit> audit;

    /// Mean and sample standard deviation per variant, in order of first
    /// appearance.
    std::vector<VariantSummary> aggregates() const;
};

struct ExperimentOptions {
    NetworkConfig network;
    TransferSpec transfer;
    std::vector<std::string> variants{std::string(kVariantTrc), std::string(kVariantFrozenSource),
                                      std::string(kVariantLrBaseline)};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    int lr_epochs = 500;
    double lr_learning_rate = 0.1;
    unsigned parallel = 1;
    std::string config_digest;
    /// Skip (with a warning) test subjects lacking k segments of some class
    /// instead of failing the run.
    bool skip_deficient_subjects = false;
};

/// Leave-one-subject-out comparison. For every fold and seed a source model
/// is trained on the other subjects, the test subject is split into transfer
/// and holdout instances, and every variant is scored on the holdout. The
/// report is identical for any `parallel` value.
EvalReport run_experiment(const Dataset& dataset, const ExperimentOptions& options);

}  // namespace har
