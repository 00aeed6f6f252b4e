#include "har/tensor.hpp"

#include <cmath>
#include <cstring>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "har/error.hpp"

namespace har {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    return fmt::format("[{}]", fmt::join(shape, " x "));
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 3) {
        throw DimensionError(fmt::format("tensor rank must be 1..3, got {}", shape.size()));
    }
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
        if (shape[axis] == 0) {
            throw DimensionError(fmt::format("tensor axis {} has zero length", axis));
        }
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (values_.size() != shape_size(shape_)) {
        throw DimensionError(fmt::format("shape {} needs {} values, got {}", shape_string(shape_),
                                         shape_size(shape_), values_.size()));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

void Tensor::zero_grad() {
    if (grad_) {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    } else {
        grad_.emplace(values_.size(), 0.0);
    }
}

bool Tensor::same_values(const Tensor& other) const noexcept {
    return shape_ == other.shape_ && values_.size() == other.values_.size() &&
           (values_.empty() ||
            std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

bool Tensor::all_finite() const noexcept {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), values_);
}

}  // namespace har
