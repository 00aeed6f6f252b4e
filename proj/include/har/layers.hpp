#pragma once

// Forward/backward pairs for the layer primitives of the activity network.
// Every function is pure: outputs depend only on the arguments (and, for
// dropout, on the generator state passed in).

#include <cstdint>
#include <span>
#include <vector>

#include "har/random.hpp"
#include "har/tensor.hpp"

namespace har {

struct Conv1dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

/// Valid-mode, stride-1 cross-correlation.
/// input [C_in x L], kernels [C_out x C_in x K], bias [C_out] -> [C_out x (L-K+1)].
/// Per output element the sum runs over channels, kernel taps innermost, and
/// the bias is added last.
Tensor conv1d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// Gradients of conv1d_forward. When `need_input_grad` is false the returned
/// input gradient is empty (rank 0).
Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream,
                            bool need_input_grad = true);

Tensor relu_forward(const Tensor& x);
/// upstream where x > 0, zero elsewhere (including x == 0).
Tensor relu_backward(const Tensor& x, const Tensor& upstream);

/// Non-overlapping max pooling over the last axis of a [C x L] tensor.
/// Trailing L mod pool samples are dropped.
Tensor maxpool1d_forward(const Tensor& x, std::size_t pool);
/// Routes each upstream value to the first maximum of its window.
Tensor maxpool1d_backward(const Tensor& x, std::size_t pool, const Tensor& upstream);

/// Column t of the [E x L] output is row ids[t] of the [B x E] table.
Tensor embedding_forward(std::span<const int> ids, const Tensor& table);
/// Accumulates upstream column t into row ids[t] of `table_grad` ([B x E]).
void embedding_backward(std::span<const int> ids, const Tensor& upstream, Tensor& table_grad);

struct DenseGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

/// W [M x D] * x [D] + b [M].
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& upstream,
                          bool need_input_grad = true);

enum class Mode { Train, Eval };

/// Inverted dropout. `mask` holds the per-element multiplier (0 or
/// 1/(1-rate)); it is empty in eval mode or when rate == 0.
struct DropoutResult {
    Tensor output;
    std::vector<double> mask;
};

DropoutResult dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng);
Tensor dropout_backward(std::span<const double> mask, const Tensor& upstream);

struct LossResult {
    double loss = 0.0;
    Tensor logit_grad;
};

/// -log softmax(logits)[label] with max-subtraction; gradient softmax - onehot.
LossResult softmax_cross_entropy(const Tensor& logits, int label);

/// Numerically stable softmax of a rank-1 tensor.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace har
