#include "har/layers.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "har/error.hpp"

namespace har {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(fmt::format("{} must have rank {}, got shape {}", what, rank,
                                         shape_string(t.shape())));
    }
}

}  // namespace

Tensor conv1d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    require_rank(input, 2, "conv1d input");
    require_rank(kernels, 3, "conv1d kernels");
    require_rank(bias, 1, "conv1d bias");
    const std::size_t c_in = input.dim(0);
    const std::size_t len = input.dim(1);
    const std::size_t c_out = kernels.dim(0);
    const std::size_t k = kernels.dim(2);
    if (kernels.dim(1) != c_in) {
        throw DimensionError(fmt::format("conv1d channel axis: input has {} channels, kernels expect {}",
                                         c_in, kernels.dim(1)));
    }
    if (k > len) {
        throw DimensionError(
            fmt::format("conv1d length axis: kernel size {} exceeds input length {}", k, len));
    }
    if (bias.dim(0) != c_out) {
        throw DimensionError(
            fmt::format("conv1d filter axis: bias has {} entries for {} filters", bias.dim(0), c_out));
    }
    const std::size_t out_len = len - k + 1;
    Tensor out({c_out, out_len});
    std::vector<double> acc(out_len);
    const double* in = input.values().data();
    const double* w = kernels.values().data();
    for (std::size_t f = 0; f < c_out; ++f) {
        std::fill(acc.begin(), acc.end(), 0.0);
        // The t loop is innermost for vectorization; each acc[t] still sees
        // its terms in (c, k) order.
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* in_row = in + c * len;
            const double* w_row = w + (f * c_in + c) * k;
            for (std::size_t j = 0; j < k; ++j) {
                const double wj = w_row[j];
                const double* src = in_row + j;
                for (std::size_t t = 0; t < out_len; ++t) acc[t] += src[t] * wj;
            }
        }
        auto out_row = out.row(f);
        for (std::size_t t = 0; t < out_len; ++t) out_row[t] = bias[f] + acc[t];
    }
    return out;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream,
                            bool need_input_grad) {
    require_rank(input, 2, "conv1d input");
    require_rank(kernels, 3, "conv1d kernels");
    require_rank(upstream, 2, "conv1d upstream gradient");
    const std::size_t c_in = input.dim(0);
    const std::size_t len = input.dim(1);
    const std::size_t c_out = kernels.dim(0);
    const std::size_t k = kernels.dim(2);
    if (kernels.dim(1) != c_in || k > len) {
        throw DimensionError(fmt::format("conv1d backward: input {} incompatible with kernels {}",
                                         shape_string(input.shape()), shape_string(kernels.shape())));
    }
    const std::size_t out_len = len - k + 1;
    if (upstream.dim(0) != c_out || upstream.dim(1) != out_len) {
        throw DimensionError(fmt::format("conv1d backward: upstream gradient {} does not match output [{} x {}]",
                                         shape_string(upstream.shape()), c_out, out_len));
    }

    Conv1dGrads g{Tensor(), Tensor(kernels.shape()), Tensor({c_out})};
    if (need_input_grad) g.input = Tensor(input.shape());
    const double* in = input.values().data();
    const double* w = kernels.values().data();
    const double* up = upstream.values().data();
    double* kg = g.kernels.values().data();

    for (std::size_t f = 0; f < c_out; ++f) {
        const double* up_row = up + f * out_len;
        double bsum = 0.0;
        for (std::size_t t = 0; t < out_len; ++t) bsum += up_row[t];
        g.bias[f] = bsum;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* in_row = in + c * len;
            for (std::size_t j = 0; j < k; ++j) {
                const double* src = in_row + j;
                // Four fixed lanes: vectorizable, and the summation order
                // does not depend on the target ISA.
                double s[4] = {0.0, 0.0, 0.0, 0.0};
                std::size_t t = 0;
                for (; t + 3 < out_len; t += 4) {
                    for (std::size_t l = 0; l < 4; ++l) s[l] += up_row[t + l] * src[t + l];
                }
                for (std::size_t l = 0; t < out_len; ++t, ++l) s[l] += up_row[t] * src[t];
                kg[(f * c_in + c) * k + j] = (s[0] + s[1]) + (s[2] + s[3]);
            }
            if (need_input_grad) {
                double* ig_row = g.input.values().data() + c * len;
                const double* w_row = w + (f * c_in + c) * k;
                for (std::size_t j = 0; j < k; ++j) {
                    const double wj = w_row[j];
                    double* dst = ig_row + j;
                    for (std::size_t t = 0; t < out_len; ++t) dst[t] += up_row[t] * wj;
                }
            }
        }
    }
    return g;
}

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    out.drop_grad();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
    if (x.shape() != upstream.shape()) {
        throw DimensionError(fmt::format("relu backward: upstream {} vs input {}",
                                         shape_string(upstream.shape()), shape_string(x.shape())));
    }
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return g;
}

Tensor maxpool1d_forward(const Tensor& x, std::size_t pool) {
    require_rank(x, 2, "maxpool input");
    if (pool == 0) throw ParameterError("maxpool size must be >= 1");
    const std::size_t channels = x.dim(0);
    const std::size_t len = x.dim(1);
    if (pool > len) {
        throw DimensionError(fmt::format("maxpool length axis: pool {} exceeds length {}", pool, len));
    }
    const std::size_t out_len = len / pool;
    Tensor out({channels, out_len});
    for (std::size_t c = 0; c < channels; ++c) {
        auto src = x.row(c);
        auto dst = out.row(c);
        for (std::size_t t = 0; t < out_len; ++t) {
            double best = src[t * pool];
            for (std::size_t j = 1; j < pool; ++j) best = std::max(best, src[t * pool + j]);
            dst[t] = best;
        }
    }
    return out;
}

Tensor maxpool1d_backward(const Tensor& x, std::size_t pool, const Tensor& upstream) {
    require_rank(x, 2, "maxpool input");
    if (pool == 0) throw ParameterError("maxpool size must be >= 1");
    const std::size_t channels = x.dim(0);
    const std::size_t len = x.dim(1);
    if (pool > len) {
        throw DimensionError(fmt::format("maxpool length axis: pool {} exceeds length {}", pool, len));
    }
    const std::size_t out_len = len / pool;
    if (upstream.rank() != 2 || upstream.dim(0) != channels || upstream.dim(1) != out_len) {
        throw DimensionError(fmt::format("maxpool backward: upstream {} does not match [{} x {}]",
                                         shape_string(upstream.shape()), channels, out_len));
    }
    Tensor g(x.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        auto src = x.row(c);
        auto up = upstream.row(c);
        auto dst = g.row(c);
        for (std::size_t t = 0; t < out_len; ++t) {
            std::size_t arg = t * pool;
            for (std::size_t j = 1; j < pool; ++j) {
                if (src[t * pool + j] > src[arg]) arg = t * pool + j;
            }
            dst[arg] += up[t];
        }
    }
    return g;
}

Tensor embedding_forward(std::span<const int> ids, const Tensor& table) {
    require_rank(table, 2, "embedding table");
    const std::size_t bins = table.dim(0);
    const std::size_t dim = table.dim(1);
    if (ids.empty()) throw DimensionError("embedding lookup needs at least one id");
    const std::size_t len = ids.size();
    Tensor out({dim, len});
    for (std::size_t t = 0; t < len; ++t) {
        const int id = ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= bins) {
            throw IndexError(fmt::format("embedding id {} at position {} outside [0, {})", id, t, bins));
        }
        auto r = table.row(static_cast<std::size_t>(id));
        for (std::size_t e = 0; e < dim; ++e) out.at(e, t) = r[e];
    }
    return out;
}

void embedding_backward(std::span<const int> ids, const Tensor& upstream, Tensor& table_grad) {
    require_rank(table_grad, 2, "embedding gradient");
    require_rank(upstream, 2, "embedding upstream gradient");
    const std::size_t bins = table_grad.dim(0);
    const std::size_t dim = table_grad.dim(1);
    if (upstream.dim(0) != dim || upstream.dim(1) != ids.size()) {
        throw DimensionError(fmt::format("embedding backward: upstream {} does not match [{} x {}]",
                                         shape_string(upstream.shape()), dim, ids.size()));
    }
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const int id = ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= bins) {
            throw IndexError(fmt::format("embedding id {} at position {} outside [0, {})", id, t, bins));
        }
        auto r = table_grad.row(static_cast<std::size_t>(id));
        for (std::size_t e = 0; e < dim; ++e) r[e] += upstream.at(e, t);
    }
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(weight, 2, "dense weight");
    require_rank(bias, 1, "dense bias");
    const std::size_t m = weight.dim(0);
    const std::size_t d = weight.dim(1);
    if (x.size() != d) {
        throw DimensionError(fmt::format("dense input axis: got {} features, weight expects {}", x.size(), d));
    }
    if (bias.dim(0) != m) {
        throw DimensionError(fmt::format("dense output axis: bias has {} entries, weight has {} rows",
                                         bias.dim(0), m));
    }
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        auto r = weight.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += r[j] * x[j];
        out[i] = acc + bias[i];
    }
    return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& upstream,
                          bool need_input_grad) {
    require_rank(weight, 2, "dense weight");
    const std::size_t m = weight.dim(0);
    const std::size_t d = weight.dim(1);
    if (x.size() != d || upstream.size() != m) {
        throw DimensionError(fmt::format("dense backward: input {} / upstream {} incompatible with weight {}",
                                         shape_string(x.shape()), shape_string(upstream.shape()),
                                         shape_string(weight.shape())));
    }
    DenseGrads g{Tensor(), Tensor(weight.shape()), Tensor({m})};
    if (need_input_grad) g.input = Tensor(x.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double u = upstream[i];
        g.bias[i] = u;
        auto gw = g.weight.row(i);
        for (std::size_t j = 0; j < d; ++j) gw[j] = u * x[j];
        if (need_input_grad) {
            auto r = weight.row(i);
            for (std::size_t j = 0; j < d; ++j) g.input[j] += u * r[j];
        }
    }
    return g;
}

DropoutResult dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0) || rate >= 1.0) {
        throw ParameterError(fmt::format("dropout rate must be in [0, 1), got {}", rate));
    }
    DropoutResult r{x, {}};
    r.output.drop_grad();
    if (mode == Mode::Eval || rate == 0.0) return r;
    const double scale = 1.0 / (1.0 - rate);
    r.mask.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.mask[i] = uniform01(rng) < rate ? 0.0 : scale;
        r.output[i] = x[i] * r.mask[i];
    }
    return r;
}

Tensor dropout_backward(std::span<const double> mask, const Tensor& upstream) {
    Tensor g = upstream;
    g.drop_grad();
    if (mask.empty()) return g;
    if (mask.size() != upstream.size()) {
        throw DimensionError(fmt::format("dropout backward: mask has {} entries, upstream {}",
                                         mask.size(), upstream.size()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    return g;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : p) v /= z;
    return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, int label) {
    require_rank(logits, 1, "logits");
    const std::size_t m = logits.size();
    if (label < 0 || static_cast<std::size_t>(label) >= m) {
        throw IndexError(fmt::format("label {} outside [0, {})", label, m));
    }
    const auto vals = logits.values();
    const double mx = *std::max_element(vals.begin(), vals.end());
    double z = 0.0;
    for (double v : vals) z += std::exp(v - mx);
    const double log_z = std::log(z);
    LossResult r{log_z - (vals[static_cast<std::size_t>(label)] - mx), Tensor({m})};
    for (std::size_t i = 0; i < m; ++i) r.logit_grad[i] = std::exp(vals[i] - mx - log_z);
    r.logit_grad[static_cast<std::size_t>(label)] -= 1.0;
    return r;
}

}  // namespace har
