#pragma once

#include <span>
#include <vector>

#include "har/signal.hpp"
#include "har/tensor.hpp"

namespace har {

/// Per channel: mean, population std, min, max, mean |v|; channel-major,
/// length 5*C.
std::vector<double> extract_shallow_features(const SegmentTensor& segment);

/// Per-dimension z-score with statistics taken from the training pool.
/// Dimensions with zero spread are centered but not scaled.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(std::span<const std::vector<double>> rows);
    std::vector<double> apply(std::span<const double> row) const;
};

struct LinearClassifier {
    Tensor weight;  // [M x D]
    Tensor bias;    // [M]

    std::vector<double> scores(std::span<const double> x) const;
    int predict(std::span<const double> x) const;
};

struct LrLoss {
    double loss = 0.0;
    Tensor weight_grad;
    Tensor bias_grad;
};

/// Mean softmax cross-entropy over the rows and its gradient.
LrLoss lr_loss_and_grad(const LinearClassifier& model, std::span<const std::vector<double>> x,
                        std::span<const int> labels);

/// Multinomial logistic regression by full-batch gradient descent from zero
/// weights. DataError when a class has no rows.
LinearClassifier train_lr_baseline(std::span<const std::vector<double>> x, std::span<const int> labels,
                                   int classes, int epochs = 500, double learning_rate = 0.1);

/// Features, standardizer and classifier bundled as one predictor.
struct ShallowBaseline {
    Standardizer standardizer;
    LinearClassifier classifier;

    static ShallowBaseline fit(std::span<const SegmentTensor> segments, int classes, int epochs,
                               double learning_rate);
    int predict(const SegmentTensor& segment) const;
};

}  // namespace har
