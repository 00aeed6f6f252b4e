#include "har/shallow.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "har/error.hpp"
#include "har/layers.hpp"
#include "har/model.hpp"

namespace har {

std::vector<double> extract_shallow_features(const SegmentTensor& segment) {
    const auto& ch = segment.channels;
    std::vector<double> f;
    f.reserve(5 * ch.dim(0));
    for (std::size_t c = 0; c < ch.dim(0); ++c) {
        const auto r = ch.row(c);
        const auto n = static_cast<double>(r.size());
        double sum = 0.0, abs_sum = 0.0;
        double lo = r[0], hi = r[0];
        for (double v : r) {
            sum += v;
            abs_sum += std::abs(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double mean = sum / n;
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        f.insert(f.end(), {mean, std::sqrt(var / n), lo, hi, abs_sum / n});
    }
    return f;
}

Standardizer Standardizer::fit(std::span<const std::vector<double>> rows) {
    if (rows.empty()) throw DataError("standardizer: no rows");
    const std::size_t d = rows.front().size();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    for (const auto& r : rows) {
        if (r.size() != d) throw DimensionError("standardizer: rows have different lengths");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    const auto n = static_cast<double>(rows.size());
    for (auto& m : s.mean) m /= n;
    for (std::size_t j = 0; j < d; ++j) {
        double var = 0.0;
        for (const auto& r : rows) var += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
        const double sd = std::sqrt(var / n);
        s.scale[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(std::span<const double> row) const {
    if (row.size() != mean.size()) {
        throw DimensionError(fmt::format("standardizer: row has {} values, expected {}", row.size(), mean.size()));
    }
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
    return out;
}

std::vector<double> LinearClassifier::scores(std::span<const double> x) const {
    const auto out = dense_forward(Tensor({x.size()}, std::vector<double>(x.begin(), x.end())), weight, bias);
    return out.data();
}

int LinearClassifier::predict(std::span<const double> x) const {
    return argmax(scores(x));
}

LrLoss lr_loss_and_grad(const LinearClassifier& model, std::span<const std::vector<double>> x,
                        std::span<const int> labels) {
    if (x.size() != labels.size() || x.empty()) {
        throw DimensionError(fmt::format("logistic regression: {} rows vs {} labels", x.size(), labels.size()));
    }
    LrLoss r{0.0, Tensor(model.weight.shape()), Tensor(model.bias.shape())};
    const std::size_t m = model.weight.dim(0);
    const std::size_t d = model.weight.dim(1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].size() != d) throw DimensionError("logistic regression: feature length mismatch");
        const Tensor logits({m}, model.scores(x[i]));
        const auto ce = softmax_cross_entropy(logits, labels[i]);
        r.loss += ce.loss;
        for (std::size_t k = 0; k < m; ++k) {
            const double g = ce.logit_grad[k];
            r.bias_grad[k] += g;
            auto row = r.weight_grad.row(k);
            for (std::size_t j = 0; j < d; ++j) row[j] += g * x[i][j];
        }
    }
    const double inv = 1.0 / static_cast<double>(x.size());
    r.loss *= inv;
    for (double& v : r.weight_grad.values()) v *= inv;
    for (double& v : r.bias_grad.values()) v *= inv;
    return r;
}

LinearClassifier train_lr_baseline(std::span<const std::vector<double>> x, std::span<const int> labels, int classes,
                                   int epochs, double learning_rate) {
    if (x.empty()) throw DataError("logistic regression: no training rows");
    if (classes < 2) throw ParameterError("logistic regression needs >= 2 classes");
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (int l : labels) {
        if (l < 0 || l >= classes) throw DataError(fmt::format("label {} outside [0, {})", l, classes));
        counts[static_cast<std::size_t>(l)] += 1;
    }
    std::vector<int> empty;
    for (int c = 0; c < classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) empty.push_back(c);
    }
    if (!empty.empty()) {
        throw DataError(fmt::format("logistic regression: no training rows for classes {}", fmt::join(empty, ", ")));
    }
    const auto m = static_cast<std::size_t>(classes);
    LinearClassifier model{Tensor({m, x.front().size()}), Tensor({m})};
    for (int e = 0; e < epochs; ++e) {
        const auto g = lr_loss_and_grad(model, x, labels);
        for (std::size_t i = 0; i < model.weight.size(); ++i) model.weight[i] -= learning_rate * g.weight_grad[i];
        for (std::size_t i = 0; i < m; ++i) model.bias[i] -= learning_rate * g.bias_grad[i];
    }
    return model;
}

ShallowBaseline ShallowBaseline::fit(std::span<const SegmentTensor> segments, int classes, int epochs,
                                     double learning_rate) {
    std::vector<std::vector<double>> raw;
    std::vector<int> labels;
    for (const auto& s : segments) {
        raw.push_back(extract_shallow_features(s));
        labels.push_back(s.label);
    }
    ShallowBaseline b;
    b.standardizer = Standardizer::fit(raw);
    for (auto& r : raw) r = b.standardizer.apply(r);
    b.classifier = train_lr_baseline(raw, labels, classes, epochs, learning_rate);
    return b;
}

int ShallowBaseline::predict(const SegmentTensor& segment) const {
    return classifier.predict(standardizer.apply(extract_shallow_features(segment)));
}

}  // namespace har
