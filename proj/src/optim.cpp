#include "har/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "har/error.hpp"

namespace har {

void adam_step(std::span<Parameter> params, OptimizerState& state) {
    for (const auto& p : params) {
        if (p.frozen) continue;
        if (!p.tensor.has_grad() || p.tensor.grad().size() != p.tensor.size()) {
            throw ContractError(fmt::format("adam: trainable parameter '{}' has no gradient", p.name));
        }
    }
    state.step += 1;
    const auto& o = state.options;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (auto& p : params) {
        if (p.frozen) continue;
        auto& mom = state.moments[p.name];
        if (mom.first.size() != p.tensor.size()) {
            mom.first.assign(p.tensor.size(), 0.0);
            mom.second.assign(p.tensor.size(), 0.0);
        }
        const auto& g = p.tensor.grad();
        auto w = p.tensor.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            mom.first[i] = o.beta1 * mom.first[i] + (1.0 - o.beta1) * g[i];
            mom.second[i] = o.beta2 * mom.second[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double mhat = mom.first[i] / c1;
            const double vhat = mom.second[i] / c2;
            w[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
        }
    }
}

}  // namespace har
