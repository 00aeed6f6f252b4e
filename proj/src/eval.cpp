#include "har/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "har/error.hpp"
#include "har/random.hpp"
#include "har/shallow.hpp"

namespace har {

std::string check_variant(std::string_view name) {
    if (name == kVariantTrc || name == kVariantFrozenSource || name == kVariantLrBaseline) return std::string(name);
    throw ConfigError(fmt::format("unknown variant '{}' (expected trc, frozen_source or lr_baseline)", name));
}

std::vector<Fold> loso_folds(std::vector<std::string> subjects) {
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    if (subjects.size() < 2) {
        throw ProtocolError(
            fmt::format("leave-one-subject-out needs at least 2 subjects, got {}", subjects.size()));
    }
    std::vector<Fold> folds;
    for (const auto& test : subjects) {
        Fold f{test, {}};
        for (const auto& s : subjects) {
            if (s != test) f.train_subjects.push_back(s);
        }
        folds.push_back(std::move(f));
    }
    return folds;
}

std::vector<Fold> loso_folds(const Dataset& dataset) {
    return loso_folds(dataset.subjects);
}

Metrics metrics_from_predictions(std::span<const int> labels, std::span<const int> predictions, int classes) {
    if (labels.size() != predictions.size()) throw DimensionError("labels and predictions differ in length");
    if (labels.empty()) throw ProtocolError("cannot evaluate an empty segment list");
    const auto m = static_cast<std::size_t>(classes);
    Metrics r;
    r.count = labels.size();
    r.confusion.assign(m, std::vector<long>(m, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes || predictions[i] < 0 || predictions[i] >= classes) {
            throw IndexError(fmt::format("label/prediction outside [0, {}) at position {}", classes, i));
        }
        r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])] += 1;
    }
    long correct = 0;
    double f1_sum = 0.0;
    int f1_classes = 0;
    for (std::size_t c = 0; c < m; ++c) {
        const long tp = r.confusion[c][c];
        long fn = 0, fp = 0;
        for (std::size_t o = 0; o < m; ++o) {
            if (o == c) continue;
            fn += r.confusion[c][o];
            fp += r.confusion[o][c];
        }
        correct += tp;
        if (tp + fp + fn == 0) continue;
        f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        ++f1_classes;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
    r.macro_f1 = f1_classes == 0 ? 0.0 : f1_sum / f1_classes;
    return r;
}

Metrics evaluate(const Predictor& predictor, std::span<const SegmentTensor> segments, int classes) {
    if (segments.empty()) throw ProtocolError("cannot evaluate an empty segment list");
    std::vector<int> labels, preds;
    labels.reserve(segments.size());
    preds.reserve(segments.size());
    for (const auto& s : segments) {
        labels.push_back(s.label);
        preds.push_back(predictor(s));
    }
    return metrics_from_predictions(labels, preds, classes);
}

std::vector<VariantSummary> EvalReport::aggregates() const {
    std::vector<VariantSummary> out;
    for (const auto& r : rows) {
        if (std::none_of(out.begin(), out.end(), [&](const auto& s) { return s.variant == r.variant; })) {
            out.push_back({r.variant});
        }
    }
    for (auto& s : out) {
        std::vector<double> acc, f1;
        for (const auto& r : rows) {
            if (r.variant != s.variant) continue;
            acc.push_back(r.accuracy);
            f1.push_back(r.macro_f1);
        }
        auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
            double sum = 0.0;
            for (double x : v) sum += x;
            mean = sum / static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        };
        s.rows = acc.size();
        mean_std(acc, s.mean_accuracy, s.std_accuracy);
        mean_std(f1, s.mean_macro_f1, s.std_macro_f1);
    }
    return out;
}

namespace {

struct UnitOutput {
    std::vector<FoldResult> rows;
    std::optional<FoldAudit> audit;
};

std::vector<std::uint64_t> uids_of(std::span<const SegmentTensor> segments) {
    std::vector<std::uint64_t> ids;
    ids.reserve(segments.size());
    for (const auto& s : segments) ids.push_back(s.uid);
    return ids;
}

UnitOutput run_unit(const Dataset& dataset, const ExperimentOptions& opt, const Fold& fold, std::size_t fold_index,
                    std::uint64_t seed) {
    UnitOutput out;
    const int classes = dataset.classes();

    std::vector<SegmentTensor> source;
    std::vector<SegmentTensor> target;
    const std::set<std::string> train_subjects(fold.train_subjects.begin(), fold.train_subjects.end());
    for (const auto& s : dataset.segments) {
        if (s.subject_id == fold.test_subject) target.push_back(s);
        else if (train_subjects.contains(s.subject_id)) source.push_back(s);
    }

    TransferSplit split;
    try {
        split = sample_transfer_instances(target, classes, opt.transfer.k,
                                          derive_seed(opt.transfer.seed, {seed, fold_index, 3}), dataset.labels);
    } catch (const DataError& e) {
        if (!opt.skip_deficient_subjects) throw;
        spdlog::warn("skipping subject {}: {}", fold.test_subject, e.what());
        return out;
    }

    FoldAudit audit;
    audit.fold = fold_index;
    audit.subject = fold.test_subject;
    audit.seed = seed;
    audit.transfer_uids = uids_of(split.transfer);
    audit.holdout_uids = uids_of(split.holdout);
    audit.transfer_per_class.assign(static_cast<std::size_t>(classes), 0);
    for (const auto& s : split.transfer) audit.transfer_per_class[static_cast<std::size_t>(s.label)] += 1;
    {
        const std::set<std::uint64_t> t(audit.transfer_uids.begin(), audit.transfer_uids.end());
        for (auto id : audit.holdout_uids) {
            if (t.contains(id)) {
                throw ProtocolError(fmt::format("segment {} is both a transfer and a holdout instance", id));
            }
        }
        if (t.size() != audit.transfer_uids.size() ||
            t.size() + audit.holdout_uids.size() != target.size()) {
            throw ProtocolError("transfer/holdout split does not partition the target subject");
        }
    }

    const bool need_source = std::any_of(opt.variants.begin(), opt.variants.end(), [](const std::string& v) {
        return v == kVariantTrc || v == kVariantFrozenSource;
    });
    std::optional<TrainedModel> source_model;
    if (need_source) {
        NetworkConfig cfg = opt.network;
        cfg.seed = derive_seed(opt.network.seed, {seed, fold_index, 2});
        Rng init_rng(derive_seed(opt.network.seed, {seed, fold_index, 1}));
        source_model = build_network(cfg, init_rng, dataset.label_names());
        const auto history = train(*source_model, source, train_options(cfg));
        spdlog::debug("fold {} seed {}: source loss {:.4f} -> {:.4f}", fold_index, seed, history.initial_loss,
                      history.epoch_loss.empty() ? history.initial_loss : history.epoch_loss.back());
    }

    const std::set<std::uint64_t> transfer_ids(audit.transfer_uids.begin(), audit.transfer_uids.end());
    for (const auto& variant : opt.variants) {
        std::vector<std::uint64_t> seen;
        auto scored = [&](const Predictor& p) {
            return evaluate(
                [&](const SegmentTensor& s) {
                    if (transfer_ids.contains(s.uid)) {
                        throw ProtocolError(fmt::format("transfer instance {} reached evaluation", s.uid));
                    }
                    seen.push_back(s.uid);
                    return p(s);
                },
                split.holdout, classes);
        };
        FoldResult row;
        row.fold = fold_index;
        row.subject = fold.test_subject;
        row.variant = variant;
        row.seed = seed;
        row.n_train = source.size();
        Metrics m;
        if (variant == kVariantFrozenSource) {
            const TrainedModel& model = *source_model;
            m = scored([&](const SegmentTensor& s) { return predict(model, s); });
            row.n_transfer = 0;
        } else if (variant == kVariantTrc) {
            TrainedModel frozen = *source_model;
            freeze_all_but_classifier(frozen);
            TransferSpec spec = opt.transfer;
            spec.seed = derive_seed(opt.transfer.seed, {seed, fold_index, 4});
            const TrainedModel tuned = fine_tune(frozen, split, spec);
            m = scored([&](const SegmentTensor& s) { return predict(tuned, s); });
            row.n_transfer = split.transfer.size();
        } else if (variant == kVariantLrBaseline) {
            std::vector<SegmentTensor> pool = source;
            pool.insert(pool.end(), split.transfer.begin(), split.transfer.end());
            const auto baseline = ShallowBaseline::fit(pool, classes, opt.lr_epochs, opt.lr_learning_rate);
            m = scored([&](const SegmentTensor& s) { return baseline.predict(s); });
            row.n_transfer = split.transfer.size();
        } else {
            throw ConfigError(fmt::format("unknown variant '{}'", variant));
        }
        row.accuracy = m.accuracy;
        row.macro_f1 = m.macro_f1;
        row.confusion = std::move(m.confusion);
        row.n_test = split.holdout.size();
        audit.evaluated_uids.push_back(std::move(seen));
        out.rows.push_back(std::move(row));
    }
    out.audit = std::move(audit);
    return out;
}

}  // namespace

EvalReport run_experiment(const Dataset& dataset, const ExperimentOptions& options) {
    validate(dataset);
    if (options.seeds.empty()) throw ConfigError("at least one seed is required");
    if (options.variants.empty()) throw ConfigError("at least one variant is required");
    ExperimentOptions opt = options;
    for (auto& v : opt.variants) v = check_variant(v);
    opt.network.channels = static_cast<int>(dataset.channels());
    opt.network.window = static_cast<int>(dataset.window());
    opt.network.classes = dataset.classes();
    validate(opt.network);

    const auto folds = loso_folds(dataset);
    struct Unit {
        std::size_t fold;
        std::uint64_t seed;
    };
    std::vector<Unit> units;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (auto s : opt.seeds) units.push_back({f, s});
    }

    std::vector<UnitOutput> outputs(units.size());
    std::vector<std::exception_ptr> errors(units.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < units.size(); i = next++) {
            try {
                outputs[i] = run_unit(dataset, opt, folds[units[i].fold], units[i].fold, units[i].seed);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(opt.parallel, static_cast<unsigned>(units.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!errors[i]) continue;
        const auto where = fmt::format("fold {} (subject {}, seed {})", units[i].fold, folds[units[i].fold].test_subject,
                                       units[i].seed);
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("{}: {}", where, e.what()));
        } catch (const std::exception& e) {
            throw std::runtime_error(fmt::format("{}: {}", where, e.what()));
        }
    }

    EvalReport report;
    report.dataset = dataset.name;
    report.config_digest = opt.config_digest;
    for (auto& o : outputs) {
        for (auto& r : o.rows) report.rows.push_back(std::move(r));
        if (o.audit) report.audit.push_back(std::move(*o.audit));
    }
    return report;
}

}  // namespace har
