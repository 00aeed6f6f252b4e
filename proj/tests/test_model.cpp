#include <doctest.h>

#include <cmath>
#include <cstring>

#include "har/error.hpp"
#include "har/model.hpp"
#include "oracles.hpp"

using namespace har;

namespace {

// Four classes separated by their signal level; every segment of a class
// sits in its own band, so the set is linearly separable after discretizing.
std::vector<SegmentTensor> separable_set(std::size_t per_class, std::size_t window, std::uint64_t seed) {
    oracle::Gen g(seed);
    std::vector<SegmentTensor> out;
    std::uint64_t uid = 0;
    for (int m = 0; m < 4; ++m) {
        for (std::size_t i = 0; i < per_class; ++i) {
            SegmentTensor s;
            s.channels = Tensor({3, window});
            for (auto& v : s.channels.values()) v = 2.0 * m + g.real(-0.4, 0.4);
            s.label = m;
            s.subject_id = "a";
            s.origin_index = i * window;
            s.uid = uid++;
            out.push_back(std::move(s));
        }
    }
    return out;
}

NetworkConfig small_config() {
    NetworkConfig c;
    c.channels = 3;
    c.window = 32;
    c.classes = 4;
    c.epochs = 30;
    return c;
}

double accuracy(const TrainedModel& m, const std::vector<SegmentTensor>& segs) {
    std::size_t ok = 0;
    for (const auto& s : segs) ok += predict(m, s) == s.label;
    return static_cast<double>(ok) / static_cast<double>(segs.size());
}

bool same_parameters(const TrainedModel& a, const TrainedModel& b) {
    if (a.parameters.size() != b.parameters.size()) return false;
    for (std::size_t i = 0; i < a.parameters.size(); ++i) {
        if (!a.parameters[i].tensor.same_values(b.parameters[i].tensor)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("default shape algebra and parameter counts") {
    NetworkConfig c;
    c.classes = 6;
    CHECK(internal_lengths(c) == std::vector<std::size_t>{200, 196, 98, 94, 47});
    // counts from the formulas: B*E; F*(C_in*K) + F; M*(F*L) + M
    const std::size_t embedding = 64 * 8;
    const std::size_t conv1 = 32 * (3 * 8 * 5) + 32;
    const std::size_t conv2 = 64 * (32 * 5) + 64;
    const std::size_t classifier = 6 * (64 * 47) + 6;
    CHECK(embedding == 512);
    CHECK(conv1 == 3872);
    CHECK(conv2 == 10304);
    CHECK(classifier == 18054);

    Rng rng(1);
    auto model = build_network(c, rng);
    REQUIRE(model.parameters.size() == 7);
    auto count = [&](std::string_view name) { return model.param(name).tensor.size(); };
    CHECK(count("embedding") == embedding);
    CHECK(count("conv0.kernels") + count("conv0.bias") == conv1);
    CHECK(count("conv1.kernels") + count("conv1.bias") == conv2);
    CHECK(count("classifier.weight") + count("classifier.bias") == classifier);
}

TEST_CASE("initialization") {
    NetworkConfig c;
    Rng rng(42);
    auto model = build_network(c, rng);
    const double a_embed = std::sqrt(6.0 / (64 + 8));
    const double a_conv0 = std::sqrt(6.0 / (24 * 5 + 32 * 5));
    for (double v : model.param("embedding").tensor.values()) CHECK(std::abs(v) <= a_embed);
    for (double v : model.param("conv0.kernels").tensor.values()) CHECK(std::abs(v) <= a_conv0);
    for (double v : model.param("conv0.bias").tensor.values()) CHECK(v == 0.0);
    for (double v : model.param("classifier.weight").tensor.values()) CHECK(v == 0.0);
    for (double v : model.param("classifier.bias").tensor.values()) CHECK(v == 0.0);

    SUBCASE("zero classifier: zero scores, ln M loss, class 0") {
        c.classes = 6;
        Rng r2(3);
        auto m = build_network(c, r2);
        oracle::Gen g(5);
        for (int i = 0; i < 5; ++i) {
            SegmentTensor s;
            s.channels = g.tensor({3, 200}, -3, 3);
            auto scores = forward(m, s);
            for (double v : scores.values()) CHECK(v == 0.0);
            CHECK(std::abs(softmax_cross_entropy(scores, i % 6).loss - std::log(6.0)) < 1e-12);
            CHECK(predict(m, s) == 0);
        }
    }
}

TEST_CASE("configuration errors") {
    NetworkConfig c;
    c.window = 8;
    c.blocks = {{4, 5, 2, 0.5}, {4, 5, 2, 0.5}};
    CHECK_THROWS_AS(validate(c), ConfigError);
    try {
        validate(c);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("block 1") != std::string::npos);
    }
    NetworkConfig d;
    d.classes = 1;
    CHECK_THROWS_AS(validate(d), ConfigError);
    d = {};
    d.bins = 1;
    CHECK_THROWS_AS(validate(d), ConfigError);
    d = {};
    d.embed_dim = 0;
    CHECK_THROWS_AS(validate(d), ConfigError);
    Rng rng(1);
    CHECK_THROWS_AS(build_network(c, rng), ConfigError);
}

TEST_CASE("forward") {
    auto c = small_config();
    Rng rng(4);
    auto m = build_network(c, rng);
    oracle::Gen g(2);
    for (auto& p : m.parameters) {
        if (is_classifier_parameter(p.name)) p.tensor = g.tensor(p.tensor.shape());
    }
    SegmentTensor s;
    s.channels = g.tensor({3, 32}, -2, 2);
    CHECK(forward(m, s).same_values(forward(m, s)));

    SegmentTensor wrong;
    wrong.channels = Tensor({3, 31});
    CHECK_THROWS_AS(forward(m, wrong), DimensionError);
    wrong.channels = Tensor({2, 32});
    CHECK_THROWS_AS(forward(m, wrong), DimensionError);

    SUBCASE("train mode is reproducible from the generator state") {
        Rng a(17), b(17);
        CHECK(forward(m, s, Mode::Train, a).same_values(forward(m, s, Mode::Train, b)));
    }
}

TEST_CASE("argmax") {
    std::vector<double> scores{0.1, 0.9, 0.3};
    CHECK(argmax(scores) == 1);
    std::vector<double> tie{0.5, 0.5, 0.2};
    CHECK(argmax(tie) == 0);
}

TEST_CASE("training") {
    auto c = small_config();
    auto data = separable_set(10, 32, 99);
    REQUIRE(data.size() == 40);

    SUBCASE("overfits a separable tiny set") {
        Rng rng(7);
        auto m = build_network(c, rng);
        auto h = train(m, data, train_options(c));
        REQUIRE(h.epoch_loss.size() == 30);
        CHECK(std::abs(h.initial_loss - std::log(4.0)) < 1e-6);
        CHECK(h.epoch_loss.front() <= std::log(4.0) + 1e-6);
        CHECK(h.epoch_loss.back() < 0.1 * std::log(4.0));
        CHECK(accuracy(m, data) == 1.0);
        CHECK(m.discretizer.fitted);
    }
    SUBCASE("zero epochs leaves parameters unchanged") {
        Rng rng(7);
        auto m = build_network(c, rng);
        const auto before = m;
        auto opts = train_options(c);
        opts.epochs = 0;
        auto h = train(m, data, opts);
        CHECK(h.epoch_loss.empty());
        CHECK(same_parameters(m, before));
    }
    SUBCASE("missing classes are reported") {
        Rng rng(7);
        auto m = build_network(c, rng);
        std::vector<SegmentTensor> partial(data.begin(), data.begin() + 20);  // classes 0 and 1
        try {
            train(m, partial, train_options(c));
            FAIL("expected DataError");
        } catch (const DataError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("class2") != std::string::npos);
            CHECK(msg.find("class3") != std::string::npos);
        }
    }
    SUBCASE("bit-identical reruns") {
        auto opts = train_options(c);
        opts.epochs = 3;
        Rng r1(11), r2(11);
        auto a = build_network(c, r1);
        auto b = build_network(c, r2);
        auto ha = train(a, data, opts);
        auto hb = train(b, data, opts);
        CHECK(same_parameters(a, b));
        CHECK(ha.epoch_loss == hb.epoch_loss);
    }
    SUBCASE("order of the training segments does not matter") {
        auto opts = train_options(c);
        opts.epochs = 3;
        auto swapped = data;
        std::swap(swapped[3], swapped[17]);
        std::reverse(swapped.begin() + 20, swapped.end());
        Rng r1(11), r2(11);
        auto a = build_network(c, r1);
        auto b = build_network(c, r2);
        train(a, data, opts);
        train(b, swapped, opts);
        const auto& probe = data[25];
        CHECK(forward(a, probe).same_values(forward(b, probe)));
    }
    SUBCASE("frozen parameters never change") {
        Rng rng(7);
        auto m = build_network(c, rng);
        m.param("conv1.kernels").frozen = true;
        m.param("embedding").frozen = true;
        const auto before = m;
        auto opts = train_options(c);
        opts.epochs = 2;
        train(m, data, opts);
        const auto& k0 = before.param("conv1.kernels").tensor.values();
        const auto& k1 = m.param("conv1.kernels").tensor.values();
        CHECK(std::memcmp(k0.data(), k1.data(), k0.size() * sizeof(double)) == 0);
        CHECK(m.param("embedding").tensor.same_values(before.param("embedding").tensor));
        CHECK_FALSE(m.param("conv0.kernels").tensor.same_values(before.param("conv0.kernels").tensor));
    }
}

TEST_CASE("adding a constant to every classifier bias keeps predictions") {
    auto c = small_config();
    auto data = separable_set(6, 32, 3);
    Rng rng(5);
    auto m = build_network(c, rng);
    auto opts = train_options(c);
    opts.epochs = 4;
    train(m, data, opts);
    auto shifted = m;
    for (double& b : shifted.param("classifier.bias").tensor.values()) b += 3.75;
    oracle::Gen g(8);
    for (int i = 0; i < 30; ++i) {
        SegmentTensor s;
        s.channels = g.tensor({3, 32}, -1, 7);
        CHECK(predict(m, s) == predict(shifted, s));
    }
}
