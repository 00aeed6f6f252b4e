// har: command-line front end for dataset generation, training, transfer
// and leave-one-subject-out evaluation.
//
// Exit status: 0 success, 2 usage, 3 I/O, 4 data/format, 5 configuration.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "har/checkpoint.hpp"
#include "har/datasets.hpp"
#include "har/error.hpp"
#include "har/eval.hpp"
#include "har/log.hpp"
#include "har/report.hpp"
#include "har/run_config.hpp"
#include "har/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitConfig = 5;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code(har::Error::Kind kind) {
    using K = har::Error::Kind;
    switch (kind) {
        case K::Io: return kExitIo;
        case K::Config:
        case K::Parameter: return kExitConfig;
        case K::Data:
        case K::Format:
        case K::Protocol:
        case K::Index:
        case K::Dimension: return kExitData;
        case K::Contract: return 1;
    }
    return 1;
}

fs::path parent_or_cwd(const fs::path& p) {
    return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw har::IoError(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
}

void write_text(const fs::path& path, const std::string& text) {
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    har::write_file_bytes(path, bytes);
}

har::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? har::RunConfig{} : har::load_run_config(path);
}

// --- synth ---------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::string config;
    std::optional<int> subjects, activities, segments, window;
    std::optional<double> noise;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
    har::SynthConfig cfg;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw har::IoError(fmt::format("cannot open config '{}'", a.config));
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw har::ConfigError(fmt::format("config '{}' is not valid JSON: {}", a.config, e.what()));
        }
        har::merge_synth_config(j, cfg);
    }
    if (a.subjects) cfg.subjects = *a.subjects;
    if (a.activities) {
        cfg.activities = *a.activities;
        if (cfg.frequencies_hz.size() != static_cast<std::size_t>(cfg.activities)) {
            cfg.frequencies_hz.clear();
            for (int m = 0; m < cfg.activities; ++m) cfg.frequencies_hz.push_back(1.0 + m);
        }
    }
    if (a.segments) cfg.segments_per_activity = *a.segments;
    if (a.window) cfg.window = *a.window;
    if (a.noise) cfg.noise_std = *a.noise;
    if (a.seed) cfg.seed = *a.seed;
    if (cfg.subjects < 2) {
        throw UsageError(fmt::format(
            "--subjects {}: leave-one-subject-out evaluation needs at least 2 subjects", cfg.subjects));
    }
    if (cfg.channels != 3) throw har::ConfigError("synthetic CSV datasets must have 3 channels");
    try {
        har::validate(cfg);
    } catch (const har::ConfigError& e) {
        throw UsageError(e.what());
    }

    const auto dataset = har::synth_generate(cfg);
    const json effective = har::to_json(cfg);
    const auto digest = har::config_digest(effective);
    const fs::path out(a.out);
    har::write_csv_dataset(dataset, out, {{"seed", cfg.seed}, {"config_digest", digest}, {"config", effective}});
    har::write_config_lock({{"synth", effective}}, out);
    std::cout << json{{"command", "synth"},
                      {"out", out.string()},
                      {"subjects", dataset.subjects.size()},
                      {"segments", dataset.segments.size()},
                      {"config_digest", digest}}
                     .dump()
              << '\n';
    return 0;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
    std::string data, dataset = "synth", config, out, exclude_subject;
};

int cmd_train(const TrainArgs& a) {
    auto rc = config_or_default(a.config);
    rc.dataset = a.dataset;
    auto dataset = har::load_dataset(a.dataset, a.data, rc);
    std::vector<har::SegmentTensor> train_set;
    for (const auto& s : dataset.segments) {
        if (s.subject_id != a.exclude_subject) train_set.push_back(s);
    }
    if (!a.exclude_subject.empty() && train_set.size() == dataset.segments.size()) {
        throw har::DataError(fmt::format("subject '{}' not in dataset (available: {})", a.exclude_subject,
                                         fmt::join(dataset.subjects, ", ")));
    }
    if (train_set.empty()) throw har::DataError("no training segments");

    rc.network.channels = static_cast<int>(dataset.channels());
    rc.network.window = static_cast<int>(dataset.window());
    rc.network.classes = dataset.classes();
    har::validate(rc.network);

    har::Rng rng(rc.network.seed);
    auto model = har::build_network(rc.network, rng, dataset.label_names());
    const auto history = har::train(model, train_set, har::train_options(rc.network));

    const fs::path out(a.out);
    const auto dir = parent_or_cwd(out);
    ensure_dir(dir);
    har::save_model(model, out);
    json log = {{"initial_loss", history.initial_loss},
                {"epoch_loss", history.epoch_loss},
                {"segments", train_set.size()},
                {"excluded_subject", a.exclude_subject}};
    write_text(fs::path(out.string() + ".train_log.json"), log.dump(2) + "\n");
    auto effective = har::to_json(rc);
    effective["data"] = a.data;
    har::write_config_lock(effective, dir);
    std::cout << json{{"command", "train"},
                      {"checkpoint", out.string()},
                      {"segments", train_set.size()},
                      {"initial_loss", history.initial_loss},
                      {"final_loss", history.epoch_loss.empty() ? history.initial_loss : history.epoch_loss.back()}}
                     .dump()
              << '\n';
    return 0;
}

// --- transfer ------------------------------------------------------------

struct TransferArgs {
    std::string model, data, dataset = "synth", subject, out, config;
    int k = 3;
    int epochs = 30;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
};

int cmd_transfer(const TransferArgs& a) {
    auto rc = config_or_default(a.config);
    rc.dataset = a.dataset;
    auto source = har::load_model(a.model);
    auto dataset = har::load_dataset(a.dataset, a.data, rc);
    if (std::find(dataset.subjects.begin(), dataset.subjects.end(), a.subject) == dataset.subjects.end()) {
        throw har::DataError(
            fmt::format("unknown subject '{}' (available: {})", a.subject, fmt::join(dataset.subjects, ", ")));
    }
    if (source.labels.size() != dataset.labels.size()) {
        throw har::DataError("checkpoint and dataset have different activity sets");
    }
    const auto target = dataset.segments_of(a.subject);
    const auto split = har::sample_transfer_instances(target, dataset.classes(), a.k, a.seed, dataset.labels);

    har::freeze_all_but_classifier(source);
    auto holdout_accuracy = [&](const har::TrainedModel& m) -> std::optional<double> {
        if (split.holdout.empty()) return std::nullopt;
        return har::evaluate([&](const har::SegmentTensor& s) { return har::predict(m, s); }, split.holdout,
                             dataset.classes())
            .accuracy;
    };
    const auto before = holdout_accuracy(source);
    har::TransferSpec spec{a.k, a.epochs, a.learning_rate, a.seed};
    const auto tuned = har::fine_tune(source, split, spec);
    const auto after = holdout_accuracy(tuned);

    const fs::path out(a.out);
    const auto dir = parent_or_cwd(out);
    ensure_dir(dir);
    har::save_model(tuned, out);
    rc.transfer = spec;
    auto effective = har::to_json(rc);
    effective["network"] = har::to_json(tuned.config);
    effective["subject"] = a.subject;
    effective["data"] = a.data;
    har::write_config_lock(effective, dir);

    json line = {{"command", "transfer"}, {"subject", a.subject}, {"transfer", split.transfer.size()},
                 {"holdout", split.holdout.size()}};
    line["accuracy_before"] = before ? json(*before) : json(nullptr);
    line["accuracy_after"] = after ? json(*after) : json(nullptr);
    std::cout << line.dump() << '\n';
    return 0;
}

// --- loso ----------------------------------------------------------------

struct LosoArgs {
    std::string data, dataset = "synth", config, variants, report;
    std::optional<int> seeds;
    unsigned parallel = 1;
};

int cmd_loso(const LosoArgs& a) {
    auto rc = config_or_default(a.config);
    rc.dataset = a.dataset;
    if (!a.variants.empty()) {
        rc.variants.clear();
        std::stringstream ss(a.variants);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) rc.variants.push_back(har::check_variant(item));
        }
    }
    if (a.seeds) {
        if (*a.seeds < 1) throw UsageError("--seeds must be >= 1");
        rc.seeds = *a.seeds;
    }
    if (a.parallel < 1) throw UsageError("--parallel must be >= 1");
    auto dataset = har::load_dataset(a.dataset, a.data, rc);

    rc.network.channels = static_cast<int>(dataset.channels());
    rc.network.window = static_cast<int>(dataset.window());
    rc.network.classes = dataset.classes();
    auto effective = har::to_json(rc);
    effective["data"] = a.data;

    har::ExperimentOptions opt;
    opt.network = rc.network;
    opt.transfer = rc.transfer;
    opt.variants = rc.variants;
    opt.seeds.clear();
    for (int s = 0; s < rc.seeds; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
    opt.lr_epochs = rc.lr_epochs;
    opt.lr_learning_rate = rc.lr_learning_rate;
    opt.parallel = a.parallel;
    opt.skip_deficient_subjects = rc.skip_deficient_subjects;
    // the parallelism setting does not affect results, so it stays out of the digest
    opt.config_digest = har::config_digest(effective);

    const auto report = har::run_experiment(dataset, opt);
    const fs::path csv(a.report);
    auto md = csv;
    md.replace_extension(".md");
    const auto dir = parent_or_cwd(csv);
    ensure_dir(dir);
    har::export_report(report, csv, md);
    har::write_config_lock(effective, dir);

    json summary = {{"command", "loso"}, {"report", csv.string()}, {"rows", report.rows.size()}};
    for (const auto& s : report.aggregates()) summary["mean_accuracy"][s.variant] = s.mean_accuracy;
    std::cout << summary.dump() << '\n';
    return 0;
}

// --- evaluate / report ---------------------------------------------------

struct EvaluateArgs {
    std::string model, data, dataset = "synth", subject, config;
};

int cmd_evaluate(const EvaluateArgs& a) {
    auto rc = config_or_default(a.config);
    const auto model = har::load_model(a.model);
    const auto dataset = har::load_dataset(a.dataset, a.data, rc);
    std::vector<har::SegmentTensor> segs =
        a.subject.empty() ? dataset.segments : dataset.segments_of(a.subject);
    if (segs.empty()) {
        throw har::DataError(fmt::format("no segments for subject '{}' (available: {})", a.subject,
                                         fmt::join(dataset.subjects, ", ")));
    }
    const auto m = har::evaluate([&](const har::SegmentTensor& s) { return har::predict(model, s); }, segs,
                                 dataset.classes());
    std::cout << json{{"command", "evaluate"}, {"segments", segs.size()}, {"accuracy", m.accuracy},
                      {"macro_f1", m.macro_f1}, {"confusion", m.confusion}}
                     .dump()
              << '\n';
    return 0;
}

struct ReportArgs {
    std::string csv, out;
};

int cmd_report(const ReportArgs& a) {
    const auto bytes = har::read_file_bytes(a.csv);
    const auto report = har::parse_report_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    write_text(a.out, har::report_markdown(report));
    std::cout << json{{"command", "report"}, {"rows", report.rows.size()}, {"markdown", a.out}}.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    har::init_logging_from_env();

    CLI::App app{"Personalized activity recognition: synthetic data, training, transfer and LOSO evaluation"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic multi-subject dataset directory");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--config", synth.config, "JSON file with synthetic-data settings");
    s->add_option("--subjects", synth.subjects, "Number of subjects (>= 2)");
    s->add_option("--activities", synth.activities, "Number of activities");
    s->add_option("--segments", synth.segments, "Segments per subject and activity");
    s->add_option("--window", synth.window, "Samples per segment");
    s->add_option("--noise", synth.noise, "Noise standard deviation");
    s->add_option("--seed", synth.seed, "Generator seed");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a network and write a HARM checkpoint");
    t->add_option("--data", train.data, "Dataset path")->required();
    t->add_option("--dataset", train.dataset, "Dataset kind")->check(CLI::IsMember({"wisdm", "sda", "synth"}));
    t->add_option("--config", train.config, "Run configuration JSON");
    t->add_option("--out", train.out, "Checkpoint path")->required();
    t->add_option("--exclude-subject", train.exclude_subject, "Leave this subject out of training");

    TransferArgs transfer;
    auto* x = app.add_subcommand("transfer", "Personalize a checkpoint to one subject (freeze all but classifier)");
    x->add_option("--model", transfer.model, "Source checkpoint")->required();
    x->add_option("--data", transfer.data, "Dataset path")->required();
    x->add_option("--dataset", transfer.dataset, "Dataset kind")->check(CLI::IsMember({"wisdm", "sda", "synth"}));
    x->add_option("--subject", transfer.subject, "Target subject id")->required();
    x->add_option("--k", transfer.k, "Labeled instances per activity")->check(CLI::PositiveNumber);
    x->add_option("--epochs", transfer.epochs, "Fine-tuning epochs")->check(CLI::NonNegativeNumber);
    x->add_option("--lr", transfer.learning_rate, "Fine-tuning learning rate")->check(CLI::PositiveNumber);
    x->add_option("--seed", transfer.seed, "Sampling and fine-tuning seed");
    x->add_option("--config", transfer.config, "Run configuration JSON (dataset options)");
    x->add_option("--out", transfer.out, "Output checkpoint")->required();

    LosoArgs loso;
    auto* l = app.add_subcommand("loso", "Leave-one-subject-out experiment");
    l->add_option("--data", loso.data, "Dataset path")->required();
    l->add_option("--dataset", loso.dataset, "Dataset kind")->check(CLI::IsMember({"wisdm", "sda", "synth"}));
    l->add_option("--config", loso.config, "Run configuration JSON");
    l->add_option("--variants", loso.variants, "Comma-separated variants (trc,frozen_source,lr_baseline)");
    l->add_option("--seeds", loso.seeds, "Number of repetitions");
    l->add_option("--report", loso.report, "CSV report path (markdown goes next to it)")->required();
    l->add_option("--parallel", loso.parallel, "Worker threads");

    EvaluateArgs evaluate;
    auto* e = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
    e->add_option("--model", evaluate.model, "Checkpoint")->required();
    e->add_option("--data", evaluate.data, "Dataset path")->required();
    e->add_option("--dataset", evaluate.dataset, "Dataset kind")->check(CLI::IsMember({"wisdm", "sda", "synth"}));
    e->add_option("--subject", evaluate.subject, "Restrict to one subject");
    e->add_option("--config", evaluate.config, "Run configuration JSON (dataset options)");

    ReportArgs report;
    auto* r = app.add_subcommand("report", "Rebuild the markdown summary from a report CSV");
    r->add_option("--csv", report.csv, "Report CSV")->required();
    r->add_option("--out", report.out, "Markdown output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return kExitUsage;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*t) return cmd_train(train);
        if (*x) return cmd_transfer(transfer);
        if (*l) return cmd_loso(loso);
        if (*e) return cmd_evaluate(evaluate);
        if (*r) return cmd_report(report);
    } catch (const UsageError& err) {
        spdlog::error("{}", err.what());
        return kExitUsage;
    } catch (const har::Error& err) {
        spdlog::error("{}", err.what());
        return exit_code(err.kind());
    } catch (const std::exception& err) {
        spdlog::error("{}", err.what());
        return 1;
    }
    return kExitUsage;
}
