#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "har/tensor.hpp"

namespace har {

/// A named, optionally frozen tensor owned by a model. Gradients travel in
/// the tensor's grad buffer.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool frozen = false;
};

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct Moments {
    std::vector<double> first;
    std::vector<double> second;
};

struct OptimizerState {
    AdamOptions options;
    std::uint64_t step = 0;
    /// Keyed by parameter name; only trainable parameters get an entry.
    std::map<std::string, Moments> moments;
};

/// One bias-corrected Adam update on every non-frozen parameter. Frozen
/// parameters are never read or written. Throws ContractError when a
/// trainable parameter has no gradient buffer.
void adam_step(std::span<Parameter> params, OptimizerState& state);

}  // namespace har
