#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "har/datasets.hpp"
#include "har/error.hpp"
#include "har/eval.hpp"
#include "har/report.hpp"
#include "har/shallow.hpp"
#include "oracles.hpp"

using namespace har;
namespace fs = std::filesystem;

namespace {

SegmentTensor channel_segment(std::vector<double> values) {
    SegmentTensor s;
    const std::size_t n = values.size();
    s.channels = Tensor({1, n}, std::move(values));
    return s;
}

// A fast configuration for exercising the protocol end to end.
ExperimentOptions quick_options() {
    ExperimentOptions o;
    o.network.epochs = 2;
    o.network.blocks = {{4, 3, 2, 0.5}, {4, 3, 2, 0.5}};
    o.transfer.epochs = 3;
    o.seeds = {0, 1};
    o.lr_epochs = 20;
    return o;
}

Dataset quick_dataset(int subjects = 3) {
    SynthConfig c;
    c.subjects = subjects;
    c.segments_per_activity = 5;
    c.window = 24;
    return synth_generate(c);
}

double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0;
    for (double x : v) m += x / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("leave-one-subject-out folds") {
    std::vector<std::string> eight{"h", "b", "c", "d", "e", "f", "g", "a"};
    auto folds = loso_folds(eight);
    REQUIRE(folds.size() == 8);
    CHECK(folds[0].test_subject == "a");
    CHECK(folds[7].test_subject == "h");
    for (const auto& f : folds) {
        CHECK(f.train_subjects.size() == 7);
        CHECK(std::find(f.train_subjects.begin(), f.train_subjects.end(), f.test_subject) == f.train_subjects.end());
    }
    CHECK(loso_folds(std::vector<std::string>{"x", "y"}).size() == 2);
    CHECK_THROWS_AS(loso_folds(std::vector<std::string>{"x"}), ProtocolError);
}

TEST_CASE("metrics") {
    std::vector<int> all{0, 1, 1, 0};
    CHECK(metrics_from_predictions(all, all, 2).accuracy == 1.0);
    std::vector<int> three{0, 1, 0, 0};
    CHECK(metrics_from_predictions(all, three, 2).accuracy == 0.75);

    std::vector<int> labels{0, 0, 1}, preds{0, 1, 1};
    auto m = metrics_from_predictions(labels, preds, 2);
    CHECK(m.confusion == std::vector<std::vector<long>>{{1, 1}, {0, 1}});
    // F1(class 0) = 2*1/(2*1+1) = 2/3; F1(class 1) = 2/3
    CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0));

    SUBCASE("absent classes are excluded from the macro average") {
        std::vector<int> l{0, 0}, p{0, 0};
        CHECK(metrics_from_predictions(l, p, 4).macro_f1 == 1.0);
    }
    SUBCASE("accuracy is the confusion trace over the count") {
        oracle::Gen g(6);
        for (int n = 0; n < 20; ++n) {
            std::vector<int> l(g.index(1, 40)), p(l.size());
            for (std::size_t i = 0; i < l.size(); ++i) {
                l[i] = static_cast<int>(g.index(0, 3));
                p[i] = static_cast<int>(g.index(0, 3));
            }
            auto mm = metrics_from_predictions(l, p, 4);
            long trace = 0, total = 0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    total += mm.confusion[i][j];
                    if (i == j) trace += mm.confusion[i][j];
                }
            CHECK(total == static_cast<long>(l.size()));
            CHECK(mm.accuracy == static_cast<double>(trace) / static_cast<double>(total));
        }
    }
    CHECK_THROWS_AS(evaluate([](const SegmentTensor&) { return 0; }, {}, 2), ProtocolError);
}

TEST_CASE("shallow features") {
    auto f = extract_shallow_features(channel_segment({2, 2, 2}));
    CHECK(f == std::vector<double>{2.0, 0.0, 2.0, 2.0, 2.0});
    auto g = extract_shallow_features(channel_segment({-1, 1}));
    CHECK(g == std::vector<double>{0.0, 1.0, -1.0, 1.0, 1.0});
    SegmentTensor wide;
    wide.channels = Tensor({15, 10});
    CHECK(extract_shallow_features(wide).size() == 75);
}

TEST_CASE("logistic regression baseline") {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
        x.push_back({-1.0});
        y.push_back(0);
        x.push_back({1.0});
        y.push_back(1);
    }
    LinearClassifier zero{Tensor({2, 1}), Tensor({2})};
    CHECK(lr_loss_and_grad(zero, x, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    auto model = train_lr_baseline(x, y, 2, 500, 0.1);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) ok += model.predict(x[i]) == y[i];
    CHECK(ok == x.size());

    SUBCASE("gradient matches central differences") {
        oracle::Gen g(15);
        for (int n = 0; n < 20; ++n) {
            const std::size_t d = g.index(1, 5), m = g.index(2, 4), rows = g.index(1, 8);
            std::vector<std::vector<double>> xs(rows);
            std::vector<int> ys(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < d; ++j) xs[r].push_back(g.real(-2, 2));
                ys[r] = static_cast<int>(g.index(0, m - 1));
            }
            LinearClassifier lc{g.tensor({m, d}), g.tensor({m})};
            const auto grads = lr_loss_and_grad(lc, xs, ys);
            auto loss = [&] { return lr_loss_and_grad(lc, xs, ys).loss; };
            CHECK(oracle::max_rel_err(grads.weight_grad.data(), oracle::numeric_grad(lc.weight.data(), loss)) < 1e-4);
            CHECK(oracle::max_rel_err(grads.bias_grad.data(), oracle::numeric_grad(lc.bias.data(), loss)) < 1e-4);
        }
    }
    SUBCASE("empty class") {
        std::vector<int> only_zero(x.size(), 0);
        CHECK_THROWS_AS(train_lr_baseline(x, only_zero, 2), DataError);
    }
    SUBCASE("standardizer") {
        std::vector<std::vector<double>> rows{{1, 5}, {3, 5}};
        auto s = Standardizer::fit(rows);
        CHECK(s.apply(rows[0]) == std::vector<double>{-1.0, 0.0});
        CHECK(s.apply(rows[1]) == std::vector<double>{1.0, 0.0});
    }
}

TEST_CASE("run_experiment protocol") {
    const auto data = quick_dataset();
    auto opt = quick_options();
    const auto report = run_experiment(data, opt);

    CHECK(report.rows.size() == 3 * 3 * 2);  // subjects x variants x seeds
    CHECK(report.audit.size() == 3 * 2);
    for (const auto& a : report.audit) {
        CHECK(a.transfer_per_class == std::vector<int>(4, 3));
        const std::set<std::uint64_t> transfer(a.transfer_uids.begin(), a.transfer_uids.end());
        for (const auto& evaluated : a.evaluated_uids) {
            CHECK(evaluated == a.holdout_uids);
            for (auto id : evaluated) CHECK(transfer.count(id) == 0);
        }
        std::set<std::uint64_t> subject_uids;
        for (const auto& s : data.segments)
            if (s.subject_id == a.subject) subject_uids.insert(s.uid);
        std::set<std::uint64_t> both(transfer);
        both.insert(a.holdout_uids.begin(), a.holdout_uids.end());
        CHECK(both == subject_uids);
    }
    for (const auto& r : report.rows) {
        long trace = 0, total = 0;
        for (std::size_t i = 0; i < r.confusion.size(); ++i)
            for (std::size_t j = 0; j < r.confusion.size(); ++j) {
                total += r.confusion[i][j];
                if (i == j) trace += r.confusion[i][j];
            }
        CHECK(static_cast<std::size_t>(total) == r.n_test);
        CHECK(r.accuracy == static_cast<double>(trace) / static_cast<double>(total));
        CHECK(r.n_test == 20 - 12);
        CHECK(r.n_train == 40);
        CHECK(r.n_transfer == (r.variant == "frozen_source" ? 0u : 12u));
    }

    SUBCASE("parallel and sequential runs agree") {
        auto par = opt;
        par.parallel = 4;
        CHECK(report_csv(run_experiment(data, par)) == report_csv(report));
    }
    SUBCASE("reruns are identical") {
        auto o = opt;
        o.variants = {"frozen_source"};
        CHECK(report_csv(run_experiment(data, o)) == report_csv(run_experiment(data, o)));
    }
    SUBCASE("frozen_source matches across variant selections") {
        auto o = opt;
        o.variants = {"frozen_source"};
        const auto only = run_experiment(data, o);
        std::vector<double> a, b;
        for (const auto& r : only.rows) a.push_back(r.accuracy);
        for (const auto& r : report.rows)
            if (r.variant == "frozen_source") b.push_back(r.accuracy);
        CHECK(a == b);
    }
    SUBCASE("errors carry the fold") {
        auto short_data = data;
        std::erase_if(short_data.segments, [](const SegmentTensor& s) {
            return s.subject_id == "s02" && s.label == 3 && s.origin_index > 24;
        });
        try {
            run_experiment(short_data, opt);
            FAIL("expected DataError");
        } catch (const Error& e) {
            CHECK(e.kind() == Error::Kind::Data);
            CHECK(std::string(e.what()).find("fold 1 (subject s02") != std::string::npos);
        }
        auto skip = opt;
        skip.skip_deficient_subjects = true;
        CHECK(run_experiment(short_data, skip).rows.size() == 2 * 3 * 2);
    }
    SUBCASE("bad options") {
        auto o = opt;
        o.variants = {"svm"};
        CHECK_THROWS_AS(run_experiment(data, o), ConfigError);
        o = opt;
        o.seeds.clear();
        CHECK_THROWS_AS(run_experiment(data, o), ConfigError);
    }
}

TEST_CASE("reports") {
    EvalReport rep;
    rep.dataset = "sda";
    rep.config_digest = "abc";
    oracle::Gen g(4);
    for (std::size_t fold = 0; fold < 8; ++fold)
        for (const char* v : {"trc", "frozen_source", "lr_baseline"})
            for (std::uint64_t seed : {0, 1}) {
                FoldResult r;
                r.fold = fold;
                r.subject = "p" + std::to_string(fold + 1);
                r.variant = v;
                r.seed = seed;
                r.accuracy = g.real(0, 1);
                r.macro_f1 = g.real(0, 1);
                r.n_train = 100;
                r.n_transfer = 57;
                r.n_test = 1083;
                rep.rows.push_back(r);
            }
    const auto csv = report_csv(rep);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 1 + 48);
    CHECK(csv.substr(0, csv.find('\n')) == "dataset,fold,subject,variant,seed,accuracy,macro_f1,n_train,n_transfer,n_test");

    const auto back = parse_report_csv(csv);
    REQUIRE(back.rows.size() == rep.rows.size());
    CHECK(back.dataset == "sda");
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& a = rep.rows[i];
        const auto& b = back.rows[i];
        CHECK(a.fold == b.fold);
        CHECK(a.subject == b.subject);
        CHECK(a.variant == b.variant);
        CHECK(a.seed == b.seed);
        CHECK(a.accuracy == b.accuracy);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(a.n_train == b.n_train);
        CHECK(a.n_transfer == b.n_transfer);
        CHECK(a.n_test == b.n_test);
    }

    SUBCASE("markdown matches aggregates recomputed from the CSV") {
        const auto md = report_markdown(rep);
        for (const char* v : {"trc", "frozen_source", "lr_baseline"}) {
            std::vector<double> acc;
            for (const auto& r : back.rows)
                if (r.variant == v) acc.push_back(r.accuracy);
            double mean = 0;
            for (double a : acc) mean += a / static_cast<double>(acc.size());
            const auto pos = md.find(std::string("| ") + v + " |");
            REQUIRE(pos != std::string::npos);
            std::istringstream row(md.substr(pos, md.find('\n', pos) - pos));
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(row, cell, '|')) cells.push_back(cell);
            // cells: "", variant, rows, mean, std, ...
            CHECK(std::abs(std::stod(cells[3]) - mean) <= 1e-12);
            CHECK(std::abs(std::stod(cells[4]) - stddev(acc)) <= 1e-12);
        }
    }
    SUBCASE("export") {
        const auto dir = fs::temp_directory_path() / "har_test_report";
        fs::create_directories(dir);
        export_report(rep, dir / "r.csv", dir / "r.md");
        std::ifstream in(dir / "r.csv");
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str() == csv);
        CHECK(fs::exists(dir / "r.md"));
        CHECK_THROWS_AS(export_report(rep, dir / "no" / "such" / "r.csv", dir / "r.md"), IoError);
    }
    SUBCASE("malformed CSV") {
        CHECK_THROWS_AS(parse_report_csv("a,b\n"), FormatError);
        CHECK_THROWS_AS(parse_report_csv(std::string(kReportCsvHeader) + "\nx,1,2\n"), FormatError);
    }
    CHECK(config_digest(nlohmann::json{{"a", 1}}).size() == 16);
    CHECK(config_digest(nlohmann::json{{"a", 1}}) != config_digest(nlohmann::json{{"a", 2}}));
}
