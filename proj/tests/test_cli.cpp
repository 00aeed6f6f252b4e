#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "har/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
    std::string err;
};

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "har_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result run(const std::string& args) {
    static int counter = 0;
    const auto base = fs::temp_directory_path() / "har_cli_test";
    fs::create_directories(base);
    const auto out = base / ("stdout_" + std::to_string(counter));
    const auto err = base / ("stderr_" + std::to_string(counter++));
    const std::string cmd =
        std::string("\"") + HAR_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// Small data and a small network keep each invocation well under a second.
const char* kSmallConfig = R"({
  "network": {"epochs": 2, "blocks": [{"filters": 4, "kernel": 3, "pool": 2, "dropout": 0.5},
                                      {"filters": 4, "kernel": 3, "pool": 2, "dropout": 0.5}]},
  "transfer": {"epochs": 3},
  "lr_baseline": {"epochs": 20},
  "seeds": 2
})";

fs::path small_data(const fs::path& dir) {
    const auto data = dir / "data";
    auto r = run("synth --out \"" + data.string() + "\" --subjects 3 --segments 5 --window 24 --seed 3");
    REQUIRE(r.status == 0);
    write(dir / "config.json", kSmallConfig);
    return data;
}

}  // namespace

TEST_CASE("cli synth") {
    const auto dir = scratch("synth");
    auto r = run("synth --out \"" + (dir / "a").string() + "\"");
    REQUIRE(r.status == 0);
    std::size_t csvs = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) csvs += e.path().extension() == ".csv";
    CHECK(csvs == 6);
    CHECK(fs::exists(dir / "a" / "manifest.json"));
    CHECK(fs::exists(dir / "a" / "config.lock.json"));
    CHECK(r.out.find("\"config_digest\"") != std::string::npos);

    REQUIRE(run("synth --out \"" + (dir / "b").string() + "\"").status == 0);
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
    }

    auto bad = run("synth --out \"" + (dir / "c").string() + "\" --subjects 1");
    CHECK(bad.status == 2);
    CHECK(bad.err.find("at least 2 subjects") != std::string::npos);
    CHECK(run("synth").status == 2);
    CHECK(run("").status == 2);
}

TEST_CASE("cli train, transfer and errors") {
    const auto dir = scratch("train");
    const auto data = small_data(dir);
    const auto cfg = (dir / "config.json").string();
    const auto model = (dir / "m" / "source.harm").string();
    auto r = run("train --data \"" + data.string() + "\" --config \"" + cfg + "\" --out \"" + model +
                 "\" --exclude-subject s01");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(model));
    CHECK(fs::exists(model + ".train_log.json"));
    CHECK(fs::exists(dir / "m" / "config.lock.json"));

    SUBCASE("corrupt checkpoint") {
        const auto bad = dir / "bad.harm";
        write(bad, "NOPE and some more bytes");
        auto e = run("transfer --model \"" + bad.string() + "\" --data \"" + data.string() +
                     "\" --subject s01 --out \"" + (dir / "t.harm").string() + "\"");
        CHECK(e.status == 4);
        CHECK(e.err.find("magic") != std::string::npos);
    }
    SUBCASE("unknown config key") {
        const auto bad = dir / "bad.json";
        write(bad, R"({"network": {"epochz": 3}})");
        auto e = run("train --data \"" + data.string() + "\" --config \"" + bad.string() + "\" --out \"" +
                     (dir / "x.harm").string() + "\"");
        CHECK(e.status == 5);
        CHECK(e.err.find("epochz") != std::string::npos);
    }
    SUBCASE("missing data") {
        auto e = run("train --data \"" + (dir / "nowhere").string() + "\" --out \"" + (dir / "x.harm").string() + "\"");
        CHECK(e.status == 3);
    }
    SUBCASE("unknown subject") {
        auto e = run("transfer --model \"" + model + "\" --data \"" + data.string() + "\" --subject s99 --out \"" +
                     (dir / "t.harm").string() + "\"");
        CHECK(e.status == 4);
        CHECK(e.err.find("s01, s02, s03") != std::string::npos);
    }
    SUBCASE("transfer") {
        const auto tuned = (dir / "t" / "tuned.harm").string();
        auto t = run("transfer --model \"" + model + "\" --data \"" + data.string() + "\" --subject s01 --k 3 --out \"" +
                     tuned + "\"");
        REQUIRE(t.status == 0);
        CHECK(t.out.find("\"transfer\":12") != std::string::npos);
        CHECK(t.out.find("\"holdout\":8") != std::string::npos);
        const auto m = har::load_model(tuned);
        for (const auto& p : m.parameters) CHECK(p.frozen == !har::is_classifier_parameter(p.name));

        SUBCASE("zero epochs only changes the frozen flags") {
            const auto same = (dir / "t" / "same.harm").string();
            REQUIRE(run("transfer --model \"" + model + "\" --data \"" + data.string() +
                        "\" --subject s01 --epochs 0 --out \"" + same + "\"")
                        .status == 0);
            auto a = har::load_model(model);
            auto b = har::load_model(same);
            REQUIRE(a.parameters.size() == b.parameters.size());
            for (std::size_t i = 0; i < a.parameters.size(); ++i) {
                CHECK(a.parameters[i].tensor.same_values(b.parameters[i].tensor));
                a.parameters[i].frozen = b.parameters[i].frozen;
            }
            CHECK(har::serialize_model(a) == har::serialize_model(b));
        }
        SUBCASE("evaluate") {
            auto e = run("evaluate --model \"" + tuned + "\" --data \"" + data.string() + "\" --subject s01");
            CHECK(e.status == 0);
            CHECK(e.out.find("\"segments\":20") != std::string::npos);
        }
    }
}

TEST_CASE("cli loso is independent of --parallel") {
    const auto dir = scratch("loso");
    const auto data = small_data(dir);
    const auto cfg = (dir / "config.json").string();
    auto loso = [&](const std::string& name, int parallel) {
        const auto report = dir / name / "report.csv";
        auto r = run("loso --data \"" + data.string() + "\" --config \"" + cfg + "\" --report \"" + report.string() +
                     "\" --parallel " + std::to_string(parallel));
        REQUIRE(r.status == 0);
        return report;
    };
    const auto one = loso("p1", 1);
    const auto four = loso("p4", 4);
    CHECK(slurp(one) == slurp(four));
    CHECK(slurp(one.parent_path() / "report.md") == slurp(four.parent_path() / "report.md"));
    CHECK(fs::exists(dir / "p1" / "config.lock.json"));
    CHECK(slurp(dir / "p1" / "config.lock.json") == slurp(dir / "p4" / "config.lock.json"));

    std::size_t lines = 0;
    for (char c : slurp(one)) lines += c == '\n';
    CHECK(lines == 1 + 3 * 3 * 2);

    auto md = dir / "rebuilt.md";
    CHECK(run("report --csv \"" + one.string() + "\" --out \"" + md.string() + "\"").status == 0);
    CHECK(fs::exists(md));

    auto bad = run("loso --data \"" + data.string() + "\" --variants trc,svm --report \"" +
                   (dir / "x.csv").string() + "\"");
    CHECK(bad.status == 5);
    CHECK(bad.err.find("svm") != std::string::npos);
}
